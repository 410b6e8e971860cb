use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {component}: {detail}")]
    NonFinite { component: String, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Self::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 1 for bad input, 2 for failures
    /// during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Shape(_) | Self::Config(_) | Self::Parse { .. } | Self::Io { .. } => 1,
            Self::NonFinite { .. } | Self::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
