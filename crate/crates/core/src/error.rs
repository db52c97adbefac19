use serde::Serialize;
use thiserror::Error;

/// Errors raised by the solver suite.
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum Error {
    /// β₂ = 0: there is no dispersion length to normalize by.
    #[error("no dispersion scale: beta2 is zero, supply an explicit normalization length")]
    NoDispersionScale,

    /// γ·P₀ = 0: the run is linear and the nonlinear length is infinite.
    #[error("linear regime: gamma * P0 is zero, nonlinear length is infinite")]
    LinearRegime,

    #[error("invalid {field}: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Non-finite field during propagation; usually the step is too large.
    #[error("non-finite field at step {step} (mode {mode}); reduce the step size")]
    NonFiniteField { step: usize, mode: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures that stem from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteField { .. }
                | Error::NonFiniteActivation { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteLoss { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
