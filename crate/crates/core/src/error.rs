//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A data file could not be loaded; names the offending field.
    #[error("load error in `{field}`: {message}")]
    Load { field: String, message: String },

    /// Numeric factorization or eigensolve breakdown.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// Iterative solver exhausted its budget.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn load(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Load {
            field: field.into(),
            message: message.into(),
        }
    }
}
