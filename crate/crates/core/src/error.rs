use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-side precondition was violated (odd sizes, ranges, crop bounds, ...).
    Contract(String),
    /// Two inputs that must share geometry do not.
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    /// Too few correspondences for the requested estimate.
    InsufficientData { needed: usize, found: usize },
    /// Every candidate model was degenerate, or a matrix is not invertible.
    Degenerate(String),
    /// Feature registration produced too few supporting matches.
    AlignmentFailed { matches: usize, required: usize },
    /// The shared field of view is smaller than the configured minimum.
    OverlapTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    /// A statistic was requested over an empty pixel set.
    NoStatistics(String),
    /// Malformed serialized data.
    InvalidData(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}x{}, found {}x{}x{}",
                expected.0, expected.1, expected.2, found.0, found.1, found.2
            ),
            Error::InsufficientData { needed, found } => write!(
                f,
                "insufficient data: need at least {needed} correspondences, got {found}"
            ),
            Error::Degenerate(msg) => write!(f, "degenerate configuration: {msg}"),
            Error::AlignmentFailed { matches, required } => write!(
                f,
                "alignment failed: {matches} supporting matches, {required} required"
            ),
            Error::OverlapTooSmall { width, height, min } => write!(
                f,
                "overlap region {width}x{height} is smaller than the {min} px minimum"
            ),
            Error::NoStatistics(msg) => write!(f, "no statistics: {msg}"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
