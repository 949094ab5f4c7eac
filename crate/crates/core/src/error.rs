use thiserror::Error;

/// Errors raised by the solvers, auditors and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: n = {n} (must be even and >= 8), length = {length} (must be > 0)")]
    InvalidGrid { n: usize, length: f64 },
    #[error("field mean {mean:e} exceeds tolerance {tol:e}; the antiderivative is not periodic")]
    NonZeroMean { mean: f64, tol: f64 },
    #[error("field has {got} samples but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in field at index {index}")]
    NonFinite { index: usize },
    #[error("invalid profile `{0}`")]
    InvalidProfile(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("blow-up at t = {t}: sup norm {sup_norm:e}")]
    BlowUp { t: f64, sup_norm: f64 },
    #[error("under-resolved at t = {t}: tail energy fraction {fraction:e} exceeds {limit:e}")]
    UnderResolved { t: f64, fraction: f64, limit: f64 },
    #[error("insufficient sampling: save spacing {spacing} exceeds {limit}")]
    InsufficientSampling { spacing: f64, limit: f64 },
    #[error("degenerate quartic bound: A = B = 0")]
    DegenerateBound,
    #[error("incompatible windows: {0}")]
    IncompatibleWindows(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
