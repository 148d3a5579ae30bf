//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Library-wide error enum.
///
/// `Config` covers rejected inputs (bad dimensions, unknown keys, precondition
/// violations detectable before any numerics run). `Validation` covers checks
/// that ran and failed (coverage bounds, density floors, invariant violations).
/// `Solver` covers runtime failures of the numerical routines themselves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("validation failure: {0}")]
    Validation(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: configuration problems exit 2,
    /// everything else (validation and runtime failures) exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::GridMismatch(_) | Error::Validation(_) | Error::Solver(_) | Error::Io(_) => 1,
        }
    }
}
