use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("frame too small: {width}x{height}, need at least {min}x{min}")]
    FrameTooSmall { width: usize, height: usize, min: usize },

    #[error("invalid cue map: {0}")]
    InvalidCueMap(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("degenerate bounding box (zero perimeter)")]
    DegenerateBox,

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
