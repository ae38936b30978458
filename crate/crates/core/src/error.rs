use std::path::PathBuf;

use crate::specfun::DomainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("evaluation point ({x}, {y}) coincides with a point source")]
    SingularPoint { x: f64, y: f64 },

    #[error("moment matrix is numerically singular (pivot ratio {pivot_ratio:e})")]
    Singular { pivot_ratio: f64 },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checksum mismatch in chunk {chunk} ({path})")]
    Checksum { chunk: usize, path: PathBuf },

    #[error("generator self-check failed: {0}")]
    SelfCheck(String),

    #[error("{skipped} of {count} records failed, above the 1% skip budget")]
    SkipBudget { skipped: usize, count: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for failures caused by the caller's inputs rather than the
    /// filesystem; the CLI maps these to its configuration exit code.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Checksum { .. } | Error::Format { .. })
    }
}
