use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum LeakError {
    /// A value or input violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A split plan references frames or videos the dataset does not contain.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("training diverged at iteration {iteration}: loss is not finite")]
    Diverged { iteration: usize },

    /// Correlation is undefined because one input is constant.
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("stale feature cache for `{id}`: stored hash {stored}, extractor hash {actual}")]
    StaleCache {
        id: String,
        stored: String,
        actual: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LeakError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LeakError::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LeakError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LeakError>;
