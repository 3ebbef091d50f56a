//! Scenario runner for switched SIS analyses.

use std::fmt;

pub mod csv;
pub mod run;
pub mod scenario;
pub mod svg;

pub use run::{plot_file, run_file, run_scenario, RunOutput};
pub use scenario::{Scenario, SchemaError, TaskKind};

#[derive(Clone, Debug, PartialEq)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input.
    Usage(String),
    /// A mathematical hypothesis of the requested analysis does not hold.
    Hypothesis(String),
    /// Numerical or I/O failure.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Hypothesis(_) => 2,
            CliError::Usage(_) | CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Hypothesis(m) => write!(f, "hypothesis not satisfied: {m}"),
            CliError::Failure(m) => write!(f, "failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Applies `EPISWITCH_THREADS` to the global rayon pool.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("EPISWITCH_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))
}
