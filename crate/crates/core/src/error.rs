use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged (non-finite loss) at step size {step}")]
    Divergence { step: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Errors from the stage cache.
#[derive(Debug, Error)]
pub enum CacheError {
    #[error("no cache entry for stage `{stage}`")]
    Missing { stage: String },

    #[error("stale cache for stage `{stage}`: entry was written for config {found}, expected {expected}")]
    Stale {
        stage: String,
        found: String,
        expected: String,
    },

    #[error("cache for stage `{stage}` failed its checksum (file corrupted)")]
    Checksum { stage: String },

    #[error("cache for stage `{stage}` is unreadable: {msg}")]
    Malformed { stage: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
