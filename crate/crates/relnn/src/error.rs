//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A vector or matrix dimension did not match what an operation expected.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An API contract was violated (stale cache, out-of-range index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed CSV input.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Malformed or mismatched checkpoint file.
    #[error("checkpoint error in {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    /// A nearest-neighbor query could not be answered.
    #[error("query error: {0}")]
    Query(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
