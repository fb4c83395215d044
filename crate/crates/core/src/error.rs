use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0} is not a usable d-sequence key (need an odd prime greater than 5)")]
    UnsupportedPrime(u64),
    #[error("key {0} is outside the supported range (must be below 2^31)")]
    KeyOutOfRange(u64),
    #[error("prime {q} has period {period}, too long to materialize")]
    PeriodTooLong { q: u64, period: u64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(
        "distortion budget infeasible: alpha = {alpha} cannot absorb host rejection \
         lambda^2 * sigma_x^2 / (N * sigma_u^2) = {rejection}"
    )]
    BudgetInfeasible { alpha: f64, rejection: f64 },
    #[error("watermark has {bits} bits but the cover only has {pixels} pixels")]
    TooManyBits { bits: usize, pixels: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("prime {0} appears more than once")]
    DuplicatePrime(u64),
    #[error("unrecognized image magic")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u64),
    #[error("truncated payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
