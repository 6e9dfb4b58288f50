use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("polar conversion of the zero vector is undefined")]
    ZeroVector,

    #[error("invalid feature: {0}")]
    InvalidFeature(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid drive log: {0}")]
    InvalidDrive(String),

    #[error("world generation infeasible: {0}")]
    InfeasibleWorld(String),

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    UnsupportedFormat {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("week {week}")]
    Campaign {
        week: u32,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, err: serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
