//! Crate-wide error type.

use thiserror::Error;

use crate::specfun::SpecfunError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("wavelength mismatch: {0} μm vs {1} μm")]
    WavelengthMismatch(f64, f64),

    #[error(transparent)]
    Specfun(#[from] SpecfunError),

    #[error("only {found} bend mode(s) available, {requested} requested{detail}")]
    InsufficientModes {
        requested: usize,
        found: usize,
        detail: String,
    },

    #[error("{what} did not converge: {trace}")]
    NoConvergence { what: String, trace: String },

    #[error("overlap matrix ill-conditioned at z = {z} μm (condition number {condition:.3e})")]
    IllConditioned { z: f64, condition: f64 },

    #[error("coupler window: {0}")]
    Window(String),

    #[error("cavity loop system is singular at λ = {0} μm")]
    SingularLoop(f64),

    #[error("at λ = {wavelength} μm: {source}")]
    AtWavelength {
        wavelength: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn at_wavelength(self, wavelength: f64) -> Self {
        match self {
            Error::AtWavelength { .. } => self,
            other => Error::AtWavelength {
                wavelength,
                source: Box::new(other),
            },
        }
    }

    /// True for input problems, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::WavelengthMismatch(..) | Error::Window(_) => true,
            Error::AtWavelength { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
