use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("rho must exceed 1 for the symmetric fixed points to exist (got {0})")]
    RhoTooSmall(f64),

    #[error("eigen solve failed: {0}")]
    EigenFailure(String),

    #[error("component {component} has a degenerate range (min = max = {value})")]
    DegenerateRange { component: usize, value: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("perplexity {perplexity} is infeasible: {reason}")]
    PerplexityInfeasible { perplexity: f64, reason: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than in
    /// arguments or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::EigenFailure(_)
                | Error::DegenerateRange { .. }
                | Error::PerplexityInfeasible { .. }
                | Error::EmptyDataset
        )
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
