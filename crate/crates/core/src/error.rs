use std::path::PathBuf;

use thiserror::Error;

use crate::fixedpoint::QFormat;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("fixed-point format mismatch: {left} vs {right}")]
    FormatMismatch { left: QFormat, right: QFormat },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Bad sample data (pixel out of range, label out of range, ...).
    #[error("input error: {0}")]
    Input(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("checksum mismatch for {path} (source {url}): expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        url: String,
        expected: String,
        actual: String,
    },

    #[error("download of {url} failed: {message}")]
    Download { url: String, message: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: msg.into(),
        }
    }
}
