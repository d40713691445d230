use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("png decode failed: {0}")]
    PngDecode(String),

    #[error("png encode failed: {0}")]
    PngEncode(String),

    #[error("expected {expected} channel(s), got {actual}")]
    ChannelCount { expected: usize, actual: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("example pair must be pixel-aligned: before is {before:?}, after is {after:?}")]
    Misaligned {
        before: (usize, usize, usize),
        after: (usize, usize, usize),
    },

    #[error("image {width}x{height} is too small: {reason}")]
    TooSmall {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty training set for channel {channel}, band {band}")]
    EmptyDataset { channel: usize, band: usize },

    #[error("not a model file (bad magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated model file")]
    Truncated,

    #[error("corrupt model file: {0}")]
    Corrupt(String),
}
