use thiserror::Error;

/// Failures raised by operator evaluation, sampling, iteration and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point lies outside the domain (distance {distance:e})")]
    Domain { distance: f64 },
    #[error("cannot construct atom: {0}")]
    Construction(String),
    #[error("empty sample: {0}")]
    EmptySample(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("iterate diverged at iteration {iteration} (norm {norm:e})")]
    Divergence { iteration: usize, norm: f64 },
    #[error("time {t} outside recorded range [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },
    #[error("trajectory is thinned around t = {0}; refusing to interpolate")]
    Thinned(f64),
    #[error("flow integration failed at step {step}: inner residual {residual:e} above tolerance {tol:e}")]
    Flow { step: usize, residual: f64, tol: f64 },
    #[error("innovation stream: {0}")]
    State(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
