use thiserror::Error;

use crate::placement::PlacementViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Popularity weights must be listed from most to least popular.
    #[error(
        "ordering violation: weight {index} ({next}) exceeds the preceding weight ({previous})"
    )]
    OrderingViolation {
        index: usize,
        previous: f64,
        next: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("infeasible placement policy: {0}")]
    InfeasiblePolicy(#[from] PlacementViolation),

    /// Raised when a low-discrepancy integral would exceed the configured
    /// dimension cap; callers are expected to fall back to simulation.
    #[error("unsupported dimension: {dimension}-dimensional integral exceeds the cap of {cap}; use simulated coverage instead")]
    UnsupportedDimension { dimension: usize, cap: usize },

    #[error("numerical failure in {context}: {detail}")]
    NumericalFailure {
        context: &'static str,
        detail: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::NumericalFailure {
            context,
            detail: detail.into(),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::OrderingViolation { .. } => "ordering-violation",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InfeasiblePolicy(_) => "infeasible-policy",
            Error::UnsupportedDimension { .. } => "unsupported-dimension",
            Error::NumericalFailure { .. } => "numerical-failure",
        }
    }
}
