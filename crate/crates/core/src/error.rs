//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("markov model construction failed: {0}")]
    Construction(String),

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("forward cache is stale: network changed since the cached forward pass")]
    StaleCache,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("unsupported format version: expected `{expected}`, found `{found}`")]
    Version { expected: String, found: String },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
