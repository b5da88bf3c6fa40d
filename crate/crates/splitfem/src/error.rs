//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value (NaN or infinity) was produced or supplied.
    #[error("non-finite value in {context}{}", triangle.map(|t| format!(" (triangle {t})")).unwrap_or_default())]
    NonFinite {
        context: String,
        triangle: Option<usize>,
    },

    #[error("linear solver: {0}")]
    LinearSolver(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("newton stagnated: damped step {step:.3e} below minimum (residual {residual:.3e})")]
    Stagnation { step: f64, residual: f64 },

    #[error("newton did not converge: {reason} (residual {residual:.3e} after {iterations} iterations)")]
    NewtonFailed {
        reason: String,
        iterations: usize,
        residual: f64,
    },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("level n={level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn non_finite(context: impl Into<String>, triangle: Option<usize>) -> Self {
        Error::NonFinite {
            context: context.into(),
            triangle,
        }
    }

    pub fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
