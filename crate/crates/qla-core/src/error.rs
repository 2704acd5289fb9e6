//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QlaError>;

#[derive(Error, Debug)]
pub enum QlaError {
    /// Invalid parameter space (empty box, true value outside, bad radius).
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),

    /// Invalid scaling schedule (non-increasing times, singular Q, bad rates).
    #[error("invalid scaling schedule: {0}")]
    InvalidSchedule(String),

    /// A point fell outside the admissible domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A field evaluation produced a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Singular matrix where an invertible one is required.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A documented precondition was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Invalid model specification.
    #[error("model error: {0}")]
    Model(String),

    /// The optimizer could not certify a maximizer.
    #[error("optimizer error: {message}\n{diagnostics}")]
    Optimizer {
        message: String,
        diagnostics: String,
    },

    /// Quadrature self-check failed beyond the allowed tolerance.
    #[error("quadrature error: {0}")]
    Quadrature(String),

    /// Condition-profile exponents violate the required inequalities.
    #[error("condition profile error: {0}")]
    Profile(String),

    /// A probe needs analytic limit objects that the model does not provide.
    #[error("missing analytic limits: {0}")]
    MissingLimits(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
