use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Scalars and points are carried as `f64` so the error type stays independent
/// of the scalar parameter of the computation that produced it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value while evaluating {what} at {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("saddle solve did not converge: residual {residual:e} after {iterations} iterations")]
    SaddleNotConverged { residual: f64, iterations: usize },

    #[error("saddle step size underflowed (rho = {rho:e}, sigma = {sigma:e})")]
    StepUnderflow { rho: f64, sigma: f64 },

    #[error("iteration diverged at k = {k}: non-finite {what}")]
    Divergence { k: usize, what: &'static str },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
