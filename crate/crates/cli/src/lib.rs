//! Config-driven front end for the `dyson-blocks` library.

pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

use dyson_blocks::dyson::DysonError;
use dyson_blocks::esd::EsdError;
use dyson_blocks::experiments::ExperimentError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl From<DysonError> for RunError {
    fn from(e: DysonError) -> Self {
        match e {
            DysonError::SingularMiddle { .. } | DysonError::DensityFailure { .. } | DysonError::Linalg(_) => {
                RunError::Numerical(e.to_string())
            }
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for RunError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::NoConvergence { .. } => RunError::Numerical(e.to_string()),
            ExperimentError::Dyson(inner) => inner.into(),
            ExperimentError::Esd(EsdError::Linalg(_)) => RunError::Numerical(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}
