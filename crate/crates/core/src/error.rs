use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimension must be at least {min}, got {got}")]
    DimensionTooSmall { min: usize, got: usize },
    #[error("vectors are parallel; rotation plane undefined")]
    ParallelVectors,
    #[error("invalid quadrature request: {0}")]
    InvalidQuadrature(String),
    #[error("exponent out of range at x: p = {p} requires p > {min}")]
    ExponentOutOfRange { p: f64, min: f64 },
    #[error("empty value list")]
    EmptyList,
    #[error("evaluation point escaped the lattice hull at {0:?}")]
    OutsideLattice(Vec<f64>),
    #[error("negative radicand {0} beyond round-off tolerance")]
    NegativeRadicand(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
