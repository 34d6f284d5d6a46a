use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("rotation angle {0} rad is too close to pi for a stable logarithm")]
    NearSingularity(f64),

    #[error("region contains no valid depth values")]
    EmptyRegion,

    #[error("human part has no valid depth after filtering")]
    NoDepth,

    #[error("rotation is not orthonormal (error {0:e})")]
    InvalidRotation(f64),

    #[error("insufficient valid pixels: {found} < {required}")]
    InsufficientPixels { found: usize, required: usize },

    #[error("trajectories have no temporal overlap within {max_dt} s")]
    NoOverlap { max_dt: f64 },

    #[error("alignment is rank deficient: {0}")]
    RankDeficient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad data or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearSingularity(_)
                | Error::InsufficientPixels { .. }
                | Error::RankDeficient(_)
                | Error::InvalidRotation(_)
        )
    }
}
