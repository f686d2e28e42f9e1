//! Lending the pre-configured beams of a legacy THz downlink to secondary
//! users through NOMA: channel synthesis, the reformulated beam/power
//! allocation problem, and branch-and-bound, SCA and greedy solvers.

pub mod baselines;
pub mod bb;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod lp;
mod nonfinite;
pub mod reform;
pub mod sca;

pub use config::SystemConfig;
pub use error::{Error, Result};
