//! Process exit codes and the error type every command returns.

use std::fmt;

use evflow::Error;

pub const IO: i32 = 1;
pub const CONFIG: i32 = 2;
pub const EMPTY: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    /// Prefixes the message with what was being done.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Failure {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn code_of(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::OutOfBounds { .. } | Error::BadMagic { .. } => {
            IO
        }
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::BelowTimerResolution { .. }
        | Error::Diverged { .. } => CONFIG,
        Error::Empty(_) | Error::EmptyNeighborhood { .. } => EMPTY,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(code_of(&e), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(IO, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Failure::from(Error::Empty("x".into())).code, EMPTY);
        assert_eq!(
            Failure::from(Error::DimensionMismatch {
                what: "D",
                expected: 32,
                actual: 64
            })
            .code,
            CONFIG
        );
        assert_eq!(
            Failure::from(Error::BadMagic {
                expected: *b"VKMW",
                found: *b"XXXX"
            })
            .code,
            IO
        );
        let f = Failure::new(IO, "gone").context("reading a.csv");
        assert_eq!(f.to_string(), "reading a.csv: gone");
    }
}
