use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("arrival count must be at least 1 (law undefined before the first arrival), got {0}")]
    InvalidCount(u64),

    #[error("uniform draw must lie strictly inside (0, 1), got {0}")]
    InvalidUniform(f64),

    #[error("log-time must be finite and <= 0, got {0}")]
    InvalidLogTime(f64),

    #[error("runaway path: more than {cap} arrivals before the horizon")]
    RunawayPath { cap: u64 },

    #[error("series did not converge within {terms} terms (achieved tail bound {bound:e})")]
    SeriesNotConverged { terms: u64, bound: f64 },

    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    QuadratureNotConverged { tol: f64, estimate: f64 },

    #[error(
        "numerical inconsistency for {what}: series {series} vs quadrature {quadrature} (|diff| = {diff:e})"
    )]
    Inconsistent {
        what: String,
        series: f64,
        quadrature: f64,
        diff: f64,
    },

    #[error("non-finite value in HJB sweep at u = {u}, n = {n}")]
    NonFinite { u: f64, n: usize },

    #[error("HJB residual {residual:e} exceeds limit {limit:e} at u = {u}, n = {n}")]
    ConvergenceFailure {
        residual: f64,
        limit: f64,
        u: f64,
        n: usize,
    },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
