use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tile range: min_tiles={min}, max_tiles={max}")]
    InvalidRange { min: u32, max: u32 },

    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: u64, height: u64 },

    #[error("invalid planner config: {0}")]
    InvalidConfig(String),

    #[error("invalid resize target {width}x{height}")]
    InvalidTarget { width: u32, height: u32 },

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: u64,
        expected_height: u64,
        width: u32,
        height: u32,
    },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("{what} ({value}) is not divisible by {divisor}")]
    NotDivisible {
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("invalid feature grid: {0}")]
    InvalidGrid(String),

    #[error("invalid tile plan: {0}")]
    InvalidPlan(String),

    #[error("{path}:{line} (byte {offset}): {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("invalid mixture spec: {0}")]
    InvalidMixture(String),

    #[error("mixture bucket `{0}` has positive weight but no records")]
    EmptyBucket(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("image decode failed for {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("image encode failed: {0}")]
    Encode(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
