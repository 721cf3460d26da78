use std::io;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum VampError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl VampError {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        VampError::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        VampError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data/parse, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            VampError::Usage(_) | VampError::Config(_) => 1,
            VampError::Parse { .. } | VampError::Io { .. } | VampError::Contract(_) => 2,
            VampError::Dimension(_) | VampError::NumericDomain(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, VampError>;
