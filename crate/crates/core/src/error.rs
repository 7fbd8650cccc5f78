use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("grid must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },

    #[error("buffer holds {found} values, expected {expected}")]
    BufferLength { expected: usize, found: usize },

    #[error("value {value} at index {index} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("placement failed: {0}")]
    Placement(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
