use std::path::PathBuf;

use dlm_core::DlmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv row {row}, column {col}: {msg}")]
    Csv { row: usize, col: usize, msg: String },

    #[error("csv: {0}")]
    CsvFormat(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Solver(#[from] DlmError),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit code: 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Solver(DlmError::InvalidInput(_) | DlmError::ShapeMismatch(_) | DlmError::Unsupported(_)) => {
                1
            }
            HarnessError::Solver(_) | HarnessError::CheckFailed(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}
