//! Batch front end for `rydres-core`: configuration files in, CSV tables and
//! a JSON run record out.

pub mod config;
pub mod dataset;
pub mod run;

pub use config::RunConfig;
pub use dataset::{format_dataset, parse_dataset, read_dataset, write_dataset, DataError, Dataset, Loaded};
pub use run::{run, Command, RunReport, RunRequest};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Exit status of a run whose fit did not converge; outputs are still written.
pub const EXIT_NOT_CONVERGED: i32 = 4;
