use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The effective K×K channel seen through the analog beams cannot be inverted.
    #[error("singular zero-forcing channel (reciprocal condition {rcond:.3e})")]
    SingularChannel { rcond: f64 },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("brute-force oracle size guard: {0}")]
    OracleTooLarge(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
