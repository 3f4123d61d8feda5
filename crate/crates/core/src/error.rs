use thiserror::Error;

/// Errors raised by the dictionary-learning kernels and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DlmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported regularizer: {0}")]
    Unsupported(String),

    #[error("initialization is rank deficient after {attempts} draws")]
    RankDeficientInit { attempts: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("penalty homotopy did not reach feasibility (best relative residual {best_residual:.3e})")]
    Infeasible { best_residual: f64 },

    #[error("problem too large for dense finite-difference Hessian: {size} variables (limit {limit})")]
    TooLarge { size: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, DlmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DlmError {
    DlmError::InvalidInput(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> DlmError {
    DlmError::ShapeMismatch(msg.into())
}
