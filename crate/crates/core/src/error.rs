use std::io;

use thiserror::Error;

/// Errors produced by the lab's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A lookup or computation needed more than the table (or set) provides.
    #[error("{what} out of range; required limit is {required}")]
    OutOfRange { what: String, required: u64 },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn out_of_range(what: impl Into<String>, required: u64) -> Self {
        Error::OutOfRange {
            what: what.into(),
            required,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
