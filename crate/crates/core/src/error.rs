use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("source-microphone distance {distance_m} m is below the 0.01 m singularity guard")]
    Singularity { distance_m: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("SIR is undefined: source magnitude is identically zero or no masked energy remains")]
    UndefinedSir,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Io,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::DimensionMismatch { .. } => {
                ErrorKind::Usage
            }
            Error::Json { .. } => ErrorKind::Usage,
            Error::Io { .. } | Error::Wav { .. } => ErrorKind::Io,
            Error::Singularity { .. }
            | Error::Calibration(_)
            | Error::UndefinedSir
            | Error::Contract(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
