use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected:?}, got {got:?}")]
    Dimension {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid model: {0}")]
    Model(String),

    /// A matrix that must be invertible for the problem to be locally
    /// solvable is singular (or numerically so). The offending matrix is kept
    /// for inspection.
    #[error("regularity violated: {what} is singular (condition estimate {condition:.3e})")]
    Regularity {
        what: &'static str,
        condition: f64,
        matrix: DMatrix<f64>,
    },

    #[error("{what} did not converge in {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("shooting did not converge in {iterations} iterations (last residual {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    Shooting { iterations: usize, history: Vec<f64> },

    #[error("step failed: {0}")]
    Step(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical solvers, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Regularity { .. }
                | Error::Convergence { .. }
                | Error::Shooting { .. }
                | Error::Step(_)
                | Error::Verification(_)
        )
    }
}
