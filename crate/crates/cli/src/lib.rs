//! Experiment driver: configs, runs, sweeps and data generation.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;

pub use config::ExperimentConfig;
pub use experiment::{Experiment, RunOptions, Summary};

/// Driver failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("divergence: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<vrsgt_core::Error> for CliError {
    fn from(e: vrsgt_core::Error) -> Self {
        use vrsgt_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Divergence { .. } => CliError::Divergence(msg),
            E::InvalidParameter { .. }
            | E::Disconnected
            | E::RetryBudgetExhausted { .. }
            | E::OutsideRegion { .. } => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}
