//! Crate-wide error type. Numerical routines return `Result<T>`; errors carry
//! enough context to act on (condition estimates, last iterates, named checks).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A declared block evaluated to the wrong shape.
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape {
        context: String,
        expected: [usize; 2],
        got: [usize; 2],
    },

    /// Grid construction rejected the requested geometry.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iteration hit its cap without meeting its tolerance.
    #[error("no convergence after {iterations} iterations (last estimate {last}, previous {previous})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        previous: f64,
    },

    /// Linear solve met a negligible pivot.
    #[error("singular operator (condition estimate {condition_estimate:.3e})")]
    Singular { condition_estimate: f64 },

    /// A quantity that must be positive is not.
    #[error("positivity lost: {0}")]
    PositivityLost(String),

    /// Explicit time step exceeds the parabolic stability bound.
    #[error("unstable step: dt = {dt:.3e} exceeds h^2/(2*Lambda) = {dt_max:.3e}")]
    UnstableStep { dt: f64, dt_max: f64 },

    /// A field or state evaluated to NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Scenario registry lookup failed.
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    /// System validation failed; the report lists the named checks.
    #[error("system validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed scenario file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::Shape {
            context: context.into(),
            expected: [expected.0, expected.1],
            got: [got.0, got.1],
        }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
