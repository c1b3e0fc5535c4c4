use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension {d} out of range (supported: {min}..={max})")]
    Dimension { d: usize, min: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid resolution: {0}")]
    Resolution(String),

    #[error("function is identically zero")]
    ZeroFunction,

    #[error("functions live on different discretizations")]
    Mismatch,

    #[error("function is not normalized: |u|_q = {norm}")]
    NotNormalized { norm: f64 },

    #[error("eigen-solver failure: max residual {residual:e}")]
    Eigen { residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
