//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A function argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// There is no parameter value achieving the requested target.
    #[error("infeasible target: {0}")]
    Infeasible(String),

    /// A covariance matrix stayed numerically indefinite after jitter escalation.
    #[error("Cholesky factorization failed after {attempts} jitter escalations")]
    Cholesky { attempts: usize },

    /// Input data are insufficient or malformed for the requested fit/build.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An optimizer failed to produce a finite result.
    #[error("optimization failed: {0}")]
    Optimization(String),

    /// Input records are malformed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
