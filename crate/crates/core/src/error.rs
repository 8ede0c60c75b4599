use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the length the operation requires.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A step index outside `1..=T` (or `0..=T` where allowed).
    StepOutOfRange { t: usize, max: usize },
    InvalidSchedule(String),
    InvalidConfig(String),
    InvalidModel(String),
    /// A factorization hit a non-positive pivot.
    Singular(&'static str),
    /// A loss, gradient or state went NaN or infinite at step `t`.
    NonFinite { what: &'static str, t: usize },
    /// Plain gradient descent would diverge on the anchor quadratic.
    UnstableStep { t: usize, ratio: f64 },
    UnknownMask(String),
    Unsupported(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected length {expected}, found {found}"),
            Error::StepOutOfRange { t, max } => write!(f, "step {t} out of range 1..={max}"),
            Error::InvalidSchedule(msg) => write!(f, "invalid schedule: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InvalidModel(msg) => write!(f, "invalid model: {msg}"),
            Error::Singular(what) => write!(f, "singular or indefinite matrix in {what}"),
            Error::NonFinite { what, t } => write!(f, "non-finite {what} at step {t}"),
            Error::UnstableStep { t, ratio } => write!(
                f,
                "gradient step at t={t} is unstable: learning rate / anchor variance = {ratio:.3} >= 2"
            ),
            Error::UnknownMask(name) => write!(f, "unknown mask `{name}`"),
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
