use std::path::PathBuf;

use crate::engine::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{op}: output dimension would be non-positive for input {input} (kernel {kernel}, stride {stride}, padding {padding})")]
    EmptyOutput {
        op: &'static str,
        input: Shape,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[error("{op}: spatial dimensions of {shape} must be even")]
    OddSpatial { op: &'static str, shape: Shape },
    #[error("{op}: spatial dimensions of {shape} must be divisible by {divisor}")]
    Indivisible {
        op: &'static str,
        shape: Shape,
        divisor: usize,
    },
    #[error("argmax index {index} out of range for input of {len} elements")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("data length {len} does not match shape {shape}")]
    DataLength { len: usize, shape: Shape },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("image {height}x{width} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("backward called without a recorded tape")]
    MissingTape,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("checkpoint checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
