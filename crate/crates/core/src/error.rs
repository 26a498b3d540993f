use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("degenerate pose: {0}")]
    DegeneratePose(String),

    #[error("undefined loss: {0}")]
    UndefinedLoss(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from the inputs (files, formats) rather than
    /// from a computation on valid inputs.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. } | Error::Parse { .. })
    }
}
