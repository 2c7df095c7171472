//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density not strictly positive: {0}")]
    NonPositiveDensity(String),

    #[error("solvability violated: {0}")]
    Solvability(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("positivity of the truncated series fails: {0}")]
    SeriesPositivity(String),

    #[error("unsupported dimension for this operation: {0}")]
    UnsupportedDim(String),

    #[error("memory guard exceeded: {0}")]
    MemoryGuard(String),

    #[error("config validation failed for field `{field}`: {reason}")]
    ConfigValidation { field: String, reason: String },

    #[error("curve violates its declared positivity margin: {0}")]
    MarginViolation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
