use thiserror::Error;

use crate::inner::InnerSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid atom: {0}")]
    InvalidAtom(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("proximal operator is not available in closed form: {0}")]
    ProxUnavailable(String),

    /// The inner solver ran out of iterations. Carries the best iterate found.
    #[error("inner solver hit {} iterations with residual {:.3e}", .0.iterations, .0.residual)]
    MaxIterExceeded(Box<InnerSolution>),

    #[error("divergence detected at iteration {iteration}: norm {norm:.3e} exceeds {limit:.3e}")]
    DivergenceDetected { iteration: usize, norm: f64, limit: f64 },

    #[error("grid has {size} points, above the limit of {limit}")]
    GridTooLarge { size: u128, limit: u128 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}
