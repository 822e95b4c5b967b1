//! Crate-wide error type.
//!
//! Physics operations validate their preconditions and return [`Error::Domain`]
//! with the violated constraint spelled out; parameter-set validation collects
//! every violation into a [`ValidationReport`] before failing, so a bad
//! scenario file reports all of its problems at once.

use crate::params::ValidationReport;
use crate::spindyn::fit::FitError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation input violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario text failed to parse. Lines are 1-indexed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Scenario file is missing a required block.
    #[error("missing required block: [{0}]")]
    MissingBlock(String),

    /// One or more parameter invariants failed.
    #[error("{0}")]
    Validation(ValidationReport),

    /// A quadrature routine failed to converge to the requested tolerance.
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    /// Nonlinear least-squares fit failed.
    #[error(transparent)]
    Fit(#[from] FitError),

    /// Slope extraction on a fringe with no field dependence.
    #[error("no fringe: signal is constant over the supplied field grid")]
    NoFringe,

    /// Requested tone fell below the detection threshold.
    #[error("tone at {freq} Hz not detected: peak {peak:.3e} is below 3x local floor {floor:.3e}")]
    ToneNotDetected { freq: f64, peak: f64, floor: f64 },

    /// Noise-floor band contains no usable bins.
    #[error("no usable bins in the requested band after masking tones")]
    EmptyBand,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks a single named precondition, returning a domain error describing
/// the offending value when it fails.
macro_rules! ensure_domain {
    ($cond:expr, $($arg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err($crate::error::Error::domain(format!($($arg)+)));
        }
    };
}

pub(crate) use ensure_domain;
