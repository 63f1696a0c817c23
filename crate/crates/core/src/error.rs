use thiserror::Error;

/// Errors raised by potentials, smoothing, samplers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inner solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error("epsilon out of range: {0}")]
    OutOfRange(String),

    #[error("missing constant: {0}")]
    MissingConstant(&'static str),

    #[error("chain diverged at iteration {iteration} (|x| = {norm:e})")]
    Divergence { iteration: usize, norm: f64 },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has a non-finite coordinate")))
    }
}
