use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "profile violates its declared growth envelope at t={t}, x={x}: |f|={value} > {bound}"
    )]
    GrowthViolation {
        t: f64,
        x: f64,
        value: f64,
        bound: f64,
    },
    #[error("s={s} is outside the rate-function domain (s must exceed zeta={zeta})")]
    OutOfDomain { s: f64, zeta: f64 },
    #[error("fitted slope h' is not increasing near p={p}")]
    NonMonotoneSlope { p: f64 },
    #[error("lattice is unstable: dt={dt} exceeds dx^2/2={limit}")]
    Unstable { dt: f64, limit: f64 },
    #[error("memory guard: {requested} bytes requested, limit {limit}")]
    MemoryGuard { requested: usize, limit: usize },
    #[error("ensemble is degenerate: {0}")]
    Degenerate(String),
    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
