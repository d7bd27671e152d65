//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected}-channel frame, got {got}")]
    InvalidChannels { expected: String, got: usize },

    #[error("frame too small for {op}: {height}x{width}")]
    TooSmall {
        op: &'static str,
        height: usize,
        width: usize,
    },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("value out of range for {space} space: {value}")]
    OutOfRange { space: &'static str, value: f64 },

    #[error("{op} expects a {expected}-space frame")]
    WrongSpace {
        op: &'static str,
        expected: &'static str,
    },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("episode {0} contains no frame images")]
    EmptyEpisode(String),

    #[error("cannot parse frame number from file name {0:?}")]
    UnparsableFrameName(PathBuf),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("negative loss weight: {0}")]
    NegativeWeight(f64),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: u64 },

    #[error("feature extractor unavailable: {0}")]
    ExtractorUnavailable(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint entry {name}: expected shape {expected:?}, got {got:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("image file {path:?}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("manifest parse error at line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },

    #[error("insufficient samples for covariance: {0} (need >= 2)")]
    InsufficientSamples(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
