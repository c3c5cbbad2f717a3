use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("noise is indexed from time 1 onward, got t = {0}")]
    InvalidTime(u64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be at least 1")]
    InvalidDimension,

    #[error("coordinate {value} exceeds the packing bound {bound}")]
    CoordinateOutOfRange { value: i128, bound: i128 },

    #[error("window has valid radius {0}, cannot step")]
    WindowExhausted(usize),

    #[error("constraint violated at t = {t}: {detail}")]
    ConstraintViolation { t: u64, detail: String },

    #[error("at least {needed} samples required, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("instance too large: {size} paths exceeds {limit}")]
    InstanceTooLarge { size: u128, limit: u128 },

    #[error("site (s = {s}, y = {y:?}) lies outside the retained dependence cone")]
    OutsideCone { s: u64, y: Vec<i64> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
