//! Crate-wide error type. Numeric domain violations and solver failures are
//! reported as values, never panics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The implicit QL sweep limit was exceeded on some off-diagonal entry.
    #[error("eigensolver did not converge: {context} (n = {n}, sweeps = {sweeps})")]
    NonConvergence {
        context: String,
        n: usize,
        sweeps: usize,
    },

    /// An experiment plan failed schema or consistency validation.
    /// `path` points at the offending field, e.g. "statistic[1].u".
    #[error("invalid experiment plan at {path}: {message}")]
    Plan { path: String, message: String },

    /// Too many solver failures during a Monte Carlo run (> 0.1% of samples).
    #[error("experiment aborted: {failed} of {total} samples failed the solver")]
    TooManyFailures { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn plan(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Plan {
            path: path.into(),
            message: msg.into(),
        }
    }
}
