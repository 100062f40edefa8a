use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation received tensors whose shapes do not conform.
    #[error("{op}: dimension mismatch ({detail})")]
    Dimension { op: &'static str, detail: String },

    /// A caller violated a documented precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    /// Malformed or out-of-range input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A numeric guard tripped (zero norm, non-finite value, undefined correlation).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A data file failed validation; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
