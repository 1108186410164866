use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBounds {
        index: usize,
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty neighborhood around ({x}, {y}) at t={t}")]
    EmptyNeighborhood { t: f64, x: u32, y: u32 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at epoch {epoch}: loss={loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("workload too small to time: median {seconds:.3e}s below the {minimum:.1e}s floor, increase the event or query count")]
    BelowTimerResolution { seconds: f64, minimum: f64 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
