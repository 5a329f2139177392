use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {detail}")]
    InvalidValue { what: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("empty or inverted interval [{t0}, {t1})")]
    Interval { t0: u64, t1: u64 },

    #[error("timestamps must be strictly increasing (index {index}: {prev} then {next})")]
    NotIncreasing { index: usize, prev: u64, next: u64 },

    #[error("no keyframe at t={t} us (required by {reason})")]
    MissingKeyframe { t: u64, reason: &'static str },

    #[error("ill-posed fit: {0}")]
    IllPosed(&'static str),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidValue {
            what,
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
