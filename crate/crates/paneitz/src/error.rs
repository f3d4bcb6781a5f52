use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile datum: {0}")]
    InvalidProfile(String),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("coefficient path violates a required hypothesis: {0}")]
    InvalidPath(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("integration failure at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("solver converged to the trivial constant solution")]
    TrivialConvergence,

    #[error("converged profile is not positive (min u = {min_u:.6e})")]
    NonPositive { min_u: f64 },

    #[error("bracketing failure: {0}")]
    Bracketing(String),

    #[error("branch continuation failure: {0}")]
    Continuation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
