use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which side of a correlation had no spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroVariance {
    /// The prediction drops were all equal.
    Predictions,
    /// The summed attribution scores were all equal.
    Scores,
    /// Neither vector varied.
    Both,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("format error ({format} v{expected}): {message}")]
    Format {
        format: &'static str,
        expected: u32,
        message: String,
    },

    #[error("unsupported {format} version {found} (expected {expected})")]
    VersionMismatch {
        format: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("correlation undefined: zero variance in {0:?}")]
    UndefinedCorrelation(ZeroVariance),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
