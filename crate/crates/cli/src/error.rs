use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("solver failed: {0}")]
    Solver(trgmm_core::Error),
}

impl CliError {
    /// 1 for solver failures, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

impl From<trgmm_core::Error> for CliError {
    fn from(e: trgmm_core::Error) -> Self {
        match e {
            trgmm_core::Error::InvalidConfig(msg) | trgmm_core::Error::InvalidParams(msg) => CliError::Usage(msg),
            other => CliError::Solver(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
