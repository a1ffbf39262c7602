//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("numerical failure: {msg} (last good t = {last_t})")]
    NumericalFailure { msg: String, last_t: f64 },

    #[error("singular propagator at t = {0}")]
    SingularPropagator(f64),

    #[error("time {t} outside trajectory span [{t0}, {t1}]")]
    OutOfSpan { t: f64, t0: f64, t1: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown catalog id `{0}`; valid ids: {1}")]
    UnknownCatalogId(String, String),

    #[error("unknown sampler strategy: {0}")]
    UnknownStrategy(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
