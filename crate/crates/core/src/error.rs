use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    ImageWrite {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("unsupported pixel format: {0}")]
    UnsupportedFormat(String),
    #[error("image has a zero dimension ({rows}x{cols})")]
    EmptyImage { rows: usize, cols: usize },
    #[error("pixel data is invalid: {0}")]
    InvalidPixels(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image {rows}x{cols} is too small for {n_octaves} octaves (need min side >= {required})")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        n_octaves: usize,
        required: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("not enough matches: {0}")]
    NotEnoughMatches(String),
    #[error("window out of bounds")]
    OutOfBounds,
    #[error("zero-energy template")]
    ZeroEnergy,
    #[error("feature matching failed: {0}")]
    FeatureStageFailed(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
