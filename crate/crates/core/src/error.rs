use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("discrete spectrum has no density")]
    NoDensity,

    #[error("invalid band [{low}, {high}]: require 0 < f_l < f_h")]
    InvalidBand { low: f64, high: f64 },

    #[error("vector must have unit norm (got |n| = {norm})")]
    NonUnitVector { norm: f64 },

    #[error("integral of the 1/f^{exponent} term diverges at low frequency; set a low-frequency cutoff")]
    DivergentLowFrequency { exponent: i32 },

    #[error("integral of the 1/f^{exponent} term diverges at high frequency")]
    DivergentHighFrequency { exponent: i32 },

    #[error("multi-pulse propagation requires a white phase-noise spectrum")]
    NonWhiteSequence,

    #[error("unknown sequence kind `{0}`")]
    UnknownKind(String),

    #[error("datasheet parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
