use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::backend::ScoringMode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures reported by a language-model backend.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("target text tokenizes to zero tokens")]
    EmptyTarget,

    #[error("backend {backend} does not support {mode} scoring")]
    UnsupportedMode { backend: String, mode: ScoringMode },

    /// Transport-level failure after retries were exhausted.
    #[error("backend at {url} unavailable after {attempts} attempt(s): {message} (retry in {}s)", retry_after.as_secs_f64())]
    Unavailable {
        url: String,
        attempts: u32,
        retry_after: Duration,
        message: String,
    },

    /// The server answered but refused the request (4xx).
    #[error("backend rejected request with HTTP {status}: {message}")]
    Rejected { status: u16, message: String },

    #[error("malformed backend response: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 I/O, 4 backend unavailable.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::UnknownLabel(_) => 2,
            Error::Io { .. } => 3,
            Error::Backend(b) => match b {
                BackendError::EmptyTarget
                | BackendError::UnsupportedMode { .. }
                | BackendError::Rejected { .. } => 2,
                BackendError::Unavailable { .. } | BackendError::Protocol(_) => 4,
            },
            Error::Record { source, .. } => source.exit_code(),
        }
    }
}
