//! Orchestration of the calibrate / learn-from-text / evaluate protocol.
//!
//! Every stage is a plain function over core types so that subcommands run
//! one stage at a time and `pipeline` runs all of them with identical
//! results.

pub mod config;
pub mod pipeline;
pub mod rundir;

use thiserror::Error;

pub use config::RunConfig;
pub use pipeline::{run_pipeline, PipelineReport};
pub use rundir::RunDir;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] qtraits_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 usage or configuration, 2 invalid data, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        use qtraits_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::InvalidConfig(_)) => 1,
            CliError::Core(E::Numerical(_)) => 3,
            CliError::Core(_) | CliError::Io(_) => 2,
        }
    }
}
