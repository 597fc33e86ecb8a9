use thiserror::Error;

/// Errors raised by the mean-field library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not an occupancy vector: {0}")]
    NotOnSimplex(String),

    #[error("kernel is not row-stochastic at the evaluated point: {0}")]
    KernelNotStochastic(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid count state: {0}")]
    InvalidCountState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("functional evaluation failed{}: {reason}", at_time(*.t))]
    FunctionalEvaluation { t: Option<usize>, reason: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {residual:e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },

    #[error("not exponentially stable: tangent spectral radius {spectral_radius}")]
    NonConvergent { spectral_radius: f64 },

    #[error("right-hand side is not mean-zero (sum {sum:e})")]
    InconsistentRhs { sum: f64 },

    #[error("iterative and direct Lyapunov solutions disagree by {discrepancy:e}")]
    LyapunovCrossCheck { discrepancy: f64 },

    #[error("state space has {size} states, limit is {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("fit is underdetermined: {points} point(s) for {parameters} parameters")]
    UnderdeterminedFit { points: usize, parameters: usize },
}

fn at_time(t: Option<usize>) -> String {
    match t {
        Some(t) => format!(" at t={t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
