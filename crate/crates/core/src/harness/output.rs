use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentResults, ExperimentSpec};
use crate::error::{Error, Result};

pub const TRIALS_HEADER: &str = "seed,sweep,solver,sum_rate_bpcu,iterations,wall_ms,residual,penalty_leak";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub code_version: String,
    pub trial_records: usize,
    pub failures: usize,
    /// Only present for timed runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    // written by hand so empty tables still carry their columns
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `trials.csv`, `summary.csv`, `pairwise.csv`, `failures.csv`,
/// `manifest.json`, and the history/trace tables when they were recorded.
pub fn emit_outputs(results: &ExperimentResults, dir: &Path) -> Result<()> {
    if results.records.is_empty() && results.failures.is_empty() {
        return Err(Error::InvalidExperiment("no results to write".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trials_header: Vec<&str> = TRIALS_HEADER.split(',').collect();
    write_csv(&dir.join("trials.csv"), &results.records, &trials_header)?;
    write_csv(
        &dir.join("summary.csv"),
        &results.summary,
        &["sweep", "solver", "trials", "mean", "std_err", "mean_iterations", "leaks", "max_residual"],
    )?;
    write_csv(
        &dir.join("pairwise.csv"),
        &results.pairwise,
        &["sweep", "solver_a", "solver_b", "paired", "mean_diff", "std_err"],
    )?;
    write_csv(&dir.join("failures.csv"), &results.failures, &["seed", "sweep", "stage", "error"])?;
    if !results.history.is_empty() {
        write_csv(
            &dir.join("bb_history.csv"),
            &results.history,
            &["seed", "sweep", "solver", "iteration", "lower", "upper", "active"],
        )?;
    }
    if !results.trace.is_empty() {
        write_csv(
            &dir.join("sca_trace.csv"),
            &results.trace,
            &["seed", "sweep", "solver", "iteration", "objective", "surrogate"],
        )?;
    }
    let manifest = Manifest {
        spec: results.spec.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        trial_records: results.records.len(),
        failures: results.failures.len(),
        elapsed_ms: results.elapsed_ms,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
