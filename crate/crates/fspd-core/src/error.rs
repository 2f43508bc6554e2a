//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while reading or writing FSPD containers.
#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic bytes (expected \"FSPD\")")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown payload kind {0}")]
    UnknownKind(u8),
    #[error("payload kind {found} where kind {expected} was expected")]
    KindMismatch { expected: u8, found: u8 },
    #[error("header dimensions invalid or overflow: {0}")]
    DimensionOverflow(String),
    #[error("payload truncated: expected {expected} bytes, got {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Domain errors from simulation, planning, decoding, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("depth {depth} m outside [0, {z_max}] m")]
    DepthOutOfRange { depth: f64, z_max: f64 },
    #[error("bin index {index} outside [0, {n_bins})")]
    BinOutOfRange { index: u32, n_bins: u32 },
    #[error("invalid sensor config: {0}")]
    InvalidConfig(String),
    #[error("invalid scene descriptor: {0}")]
    InvalidScene(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("histogram has no bins")]
    EmptyHistogram,
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("no overlapping valid pixels")]
    NoValidPixels,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
