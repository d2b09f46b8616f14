use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("mismatched block structure")]
    BlockMismatch,
    #[error("invalid block offsets: {0}")]
    InvalidBlocks(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value {value} is below the increasing range (minimum {min})")]
    BelowRange { value: f64, min: f64 },
    #[error("function is not nondecreasing near x = {0}")]
    NotMonotone(f64),
    #[error("memory cap exceeded: {needed} coordinates requested, cap {cap}")]
    MemoryCap { needed: usize, cap: usize },
    #[error("backend does not produce coordinates")]
    NoCoordinates,
    #[error("summability could not be certified: {0}")]
    Uncertified(String),
    #[error("map is not injective: zero image distance at domain distance {0}")]
    NotInjective(f64),
    #[error("insufficient bins: {found} nonempty in range, need {needed}")]
    InsufficientBins { found: usize, needed: usize },
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("enumeration cap exceeded: {0}")]
    Cap(String),
    #[error("empty set")]
    EmptySet,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown name: {0}")]
    UnknownName(String),
}

pub type Result<T> = std::result::Result<T, Error>;
