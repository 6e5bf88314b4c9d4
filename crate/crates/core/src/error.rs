//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree {l} out of range (table holds l_max = {l_max})")]
    DegreeOutOfRange { l: i64, l_max: i64 },

    #[error("index out of range: l={l}, m={m}, s={s}")]
    IndexOutOfRange { l: i64, m: i64, s: i64 },

    #[error("bandwidth mismatch: expected {expected}, got {got}")]
    BandwidthMismatch { expected: usize, got: usize },

    #[error("spin {spin} not present (available: {available:?})")]
    SpinMismatch { spin: i32, available: Vec<i32> },

    #[error("feature and filter spin sets do not intersect")]
    EmptySpinIntersection,

    #[error("operation requires spin 0, got spin {0}")]
    SpinNotZero(i32),

    #[error("operation requires nonzero spin, got spin 0")]
    SpinZero,

    #[error("bandwidth {b_new} leaves no coefficients for spin {spin}")]
    EmptySpectrum { b_new: usize, spin: i32 },

    #[error("batch norm statistics are uninitialized in inference mode")]
    UninitializedStats,

    #[error("feature map is in the {got} domain, expected {expected}")]
    WrongDomain {
        expected: &'static str,
        got: &'static str,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("anchor count {n_anchor} exceeds bandwidth {bandwidth}")]
    TooManyAnchors { n_anchor: usize, bandwidth: usize },

    #[error("bad magic number {got:#010x}, expected {expected:#010x}")]
    BadMagic { got: u32, expected: u32 },

    #[error("file truncated: {0}")]
    Truncated(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
