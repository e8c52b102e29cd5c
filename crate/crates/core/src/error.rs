use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file at byte offset {offset}: {detail}")]
    Corrupt { offset: usize, detail: String },

    #[error("row alignment mismatch: {0}")]
    Alignment(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged { epoch: usize, batch: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn corrupt(offset: usize, detail: impl Into<String>) -> Self {
        Error::Corrupt {
            offset,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data/format, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 1,
            Error::Diverged { .. } => 3,
            _ => 2,
        }
    }
}
