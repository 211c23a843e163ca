use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("tensor of {size} entries exceeds materialization cap of {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("negative value in {0}")]
    Negative(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Normal equations could not be factorized; raise lambda or lower the rank.
    #[error(
        "singular normal equations while updating {0} factor (increase lambda or reduce rank)"
    )]
    SingularSystem(String),

    /// A sample for which a metric or map is undefined (all-zero GT, constant map, no fixations).
    #[error("excluded sample: {0}")]
    ExcludedSample(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn validation(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for failures of the numerical core rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem(_) | Error::SizeCapExceeded { .. }
        )
    }
}
