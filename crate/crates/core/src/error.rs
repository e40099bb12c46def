use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Errors raised by the agent core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("prior kernel is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NonPsdKernel { min_eigenvalue: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("degenerate observation: innovation covariance condition number {condition:e}")]
    DegenerateObservation { condition: f64 },

    #[error("degenerate experience signal: predictive variance {variance:e} below 1e-14")]
    DegenerateSignal { variance: f64 },

    #[error("covariance ordering violated: after exceeds before by eigenvalue {eigenvalue:e}")]
    OrderingViolation { eigenvalue: f64 },

    #[error("no feasible action at state {state}")]
    NoFeasibleAction { state: usize },

    #[error("action {action} is infeasible at state {state}")]
    InfeasibleAction { action: usize, state: usize },

    #[error("transition row (action {action}, state {state}) sums to {sum}")]
    TransitionRow { action: usize, state: usize, sum: f64 },

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    GroundTruthNonConvergence { iterations: usize, residual: f64 },

    #[error("temperature solver did not converge ({} temperatures tried)", history.len())]
    SolverNonConvergence { history: Vec<f64> },

    #[error("period {period}: {source}")]
    Period {
        period: u64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
