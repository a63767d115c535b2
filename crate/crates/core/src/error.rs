use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by grid construction, parameter validation, the solver and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),

    #[error("invalid velocity: {0}")]
    InvalidVelocity(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("non-positive pressure {0} Pa")]
    NonPositivePressure(f64),

    #[error("non-positive temperature {0} K")]
    NonPositiveTemperature(f64),

    #[error("NaN encountered in field interior")]
    NanInField,

    #[error("non-finite value in `{field}` at cell ({i}, {j}, {k}), t = {t}: {dump}")]
    NonFinite {
        field: &'static str,
        i: usize,
        j: usize,
        k: usize,
        t: f64,
        dump: String,
    },

    #[error("time step {dt} fell below the floor {floor}")]
    TimeStepUnderflow { dt: f64, floor: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
