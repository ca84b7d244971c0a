use thiserror::Error;

use crate::tomography::NonConvergence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("`{name}` is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { name: &'static str, deviation: f64 },

    #[error("`{name}` is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { name: &'static str, min_eigenvalue: f64 },

    #[error("invalid `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("Kraus set is empty")]
    EmptyKraus,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no interior peak")]
    NoInteriorPeak,

    #[error("peak at grid boundary")]
    PeakAtBoundary,

    #[error(
        "calibration bracket does not contain target {target_hz} Hz \
         (FWHM {low_fwhm_hz} Hz at lower bound, {high_fwhm_hz} Hz at upper bound)"
    )]
    CalibrationBracket { target_hz: f64, low_fwhm_hz: f64, high_fwhm_hz: f64 },

    #[error("no retrieved signal")]
    NoRetrievedSignal,

    #[error("missing tomography setting {input}/{projector}")]
    MissingSetting { input: &'static str, projector: &'static str },

    #[error("both counts of basis pair {first}/{second} are zero for input {input}")]
    EmptyBasisPair { input: &'static str, first: &'static str, second: &'static str },

    #[error("maximum-likelihood estimation did not converge after {} iterations", .0.iterations)]
    NonConvergence(Box<NonConvergence>),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(name))
    }
}
