//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image file {path}: {reason}")]
    MalformedImage { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported PGM maxval {0}; only 8-bit images (maxval 255) are accepted")]
    UnsupportedMaxval(u64),

    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("pixel buffer has {got} bytes, expected {width}x{height} = {expected}")]
    PixelCountMismatch {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },

    #[error("image of size {width}x{height} cannot be split into quadrants; both sides must be at least 2")]
    DegenerateSplit { width: usize, height: usize },

    #[error("constant image has a degenerate histogram; no two-class threshold exists")]
    DegenerateHistogram,

    #[error("mask contains no ice pixels, so distances to ice are undefined")]
    NoIcePixels,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("feature row has {got} entries, expected {expected}")]
    FeatureDimMismatch { expected: usize, got: usize },

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data file {path}: {reason}")]
    MalformedData { path: PathBuf, reason: String },

    #[error("model file error: {0}")]
    ModelFormat(String),
}
