use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the analysis core.
#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The Euler-rate transform was requested too close to pitch = ±π/2.
    #[error("Euler-rate singularity: pitch {theta} rad is within the gimbal-lock guard")]
    Singularity { theta: f64 },
    /// Inconsistent or invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// The integrated state left its physical caps.
    #[error("integration diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },
    /// An iterative solver failed to meet its tolerance.
    #[error("numeric error: {what} (residual {residual:e})")]
    Numeric { what: String, residual: f64 },
    /// The operation does not apply to this hull shape.
    #[error("shape error: {0}")]
    Shape(String),
    /// No admissible measure satisfies the moment constraint.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A response evaluation failed at the given input coordinates.
    #[error("response evaluation failed at {coords:?}: {message}")]
    Response { coords: Vec<f64>, message: String },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
