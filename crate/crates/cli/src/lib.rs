//! Experiment harness: configure and run the sigma × seed grid, verify the
//! property suites, and compare aggregate tables.

pub mod compare;
pub mod config;
pub mod runner;
pub mod svg;
pub mod verify;

use condind_core::datagen::DatagenError;
use condind_core::gaussian::GaussianError;
use condind_core::metrics::MetricsError;
use condind_core::prob::ProbError;
use condind_core::tc::TcError;
use condind_core::vae::VaeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("property check failed: {0}")]
    PropertyFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tc(#[from] TcError),
}

impl CliError {
    /// Process exit status: 1 for a failed property check, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::PropertyFailed(_) => 1,
            _ => 2,
        }
    }
}
