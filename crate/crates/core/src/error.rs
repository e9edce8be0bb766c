use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error(
        "payload of {len} bits exceeds the {capacity}-bit frame capacity ({} frames needed)",
        len.div_ceil(*capacity.max(&1))
    )]
    Capacity { len: usize, capacity: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty or zero-area image region")]
    EmptyRegion,

    #[error("invalid bit string: unexpected character {0:?}")]
    BitString(char),

    #[error("PGM format error: {0}")]
    Pgm(String),

    #[error("CSV schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
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
