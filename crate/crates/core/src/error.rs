use thiserror::Error;

use crate::probcore::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid kernel: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidKernel(Vec<Violation>),

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("stationary distribution is not unique")]
    Multiplicity,

    #[error("degenerate tilt: row normalizer vanished for condition {condition:?}")]
    Degeneracy { condition: Vec<usize> },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("target out of range: {0}")]
    Range(String),

    #[error("bisection bracket failure: {0}")]
    Bracketing(String),

    #[error("scheme structure error: {0}")]
    Structure(String),

    #[error("enumeration needs {required} table entries but the budget allows {allowed}")]
    Capacity { required: u128, allowed: u128 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
