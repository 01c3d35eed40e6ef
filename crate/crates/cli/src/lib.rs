//! Experiment harness behind the `coded-mv` binary: configuration, run
//! manifests and the `plan`, `verify`, `simulate` and `fl-demo` commands.

pub mod commands;
pub mod config;
pub mod manifest;
mod report;

pub use commands::{cmd_fl_demo, cmd_plan, cmd_simulate, cmd_verify, VerifyMode};
pub use config::{ConfigError, ExperimentConfig, RosterSpec};
pub use manifest::RunManifest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("decode failure: {0}")]
    Decode(String),
    #[error("{0}")]
    Run(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 1 other failure, 2 bad configuration, 3 verification
    /// failure, 4 decode failure with `--require-success`.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Decode(_) => 4,
            CliError::Run(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(format!("csv: {e}"))
    }
}
