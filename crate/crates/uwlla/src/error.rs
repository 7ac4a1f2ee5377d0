//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The iterative SVD failed to converge. Carries basic conditioning
    /// diagnostics so the caller can tell a pathological input from a bug.
    #[error(
        "SVD did not converge on a {rows}x{cols} matrix \
         (frobenius {frobenius:.3e}, max |entry| {max_abs:.3e})"
    )]
    SvdDidNotConverge {
        rows: usize,
        cols: usize,
        frobenius: f64,
        max_abs: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Malformed file content (PGM raster, dataset manifest, ...).
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
