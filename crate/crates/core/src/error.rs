use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported partition mode: {0}")]
    UnsupportedMode(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// I/O error that names the file involved.
    pub(crate) fn at_path(path: &std::path::Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for configuration, 2 for I/O and file format, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) | Error::UnsupportedMode(_) => 1,
            Error::Io(_) | Error::Format(_) | Error::Csv(_) => 2,
            Error::DimensionMismatch { .. } | Error::Numeric(_) => 3,
        }
    }
}
