//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite sample: {0}")]
    NonFinite(String),

    #[error("band index {index} out of range for {bands}-band cube")]
    BandOutOfRange { index: usize, bands: usize },

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("materialization cap exceeded: {entries} entries > cap {cap}")]
    CapExceeded { entries: usize, cap: usize },

    #[error("missing sidecar header for {0}")]
    MissingSidecar(PathBuf),

    #[error("bad header {path}: {detail}")]
    HeaderParse { path: PathBuf, detail: String },

    #[error("unknown dtype `{dtype}` in {path}")]
    UnknownDtype { path: PathBuf, dtype: String },

    #[error("payload size mismatch for {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("value {value} not representable as {dtype} (pass clamp to saturate)")]
    RangeViolation { value: f64, dtype: &'static str },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image encode error: {0}")]
    ImageEncode(String),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error line and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimensions(_) => "invalid-dimensions",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::BandOutOfRange { .. } => "band-out-of-range",
            Error::RankDeficient(_) => "rank-deficient",
            Error::DegenerateVariance(_) => "degenerate-variance",
            Error::NoSolution(_) => "no-solution",
            Error::CapExceeded { .. } => "cap-exceeded",
            Error::MissingSidecar(_) => "missing-sidecar",
            Error::HeaderParse { .. } => "header-parse",
            Error::UnknownDtype { .. } => "unknown-dtype",
            Error::SizeMismatch { .. } => "size-mismatch",
            Error::RangeViolation { .. } => "range-violation",
            Error::Io { .. } => "io",
            Error::ImageEncode(_) => "image-encode",
        }
    }

    /// Process exit code: 2 for data/format problems, 3 for numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient(_) | Error::DegenerateVariance(_) | Error::NoSolution(_) => 3,
            _ => 2,
        }
    }
}
