use thiserror::Error;

pub type Result<T> = std::result::Result<T, LutError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LutError {
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),

    #[error("grid size mismatch: expected {expected}, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("empty basis list")]
    EmptyBasis,

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("empty image")]
    EmptyImage,

    #[error("scale length {actual} does not match rank {expected}")]
    ScaleLength { expected: usize, actual: usize },

    #[error("component index {index} out of range for rank {rank}")]
    ComponentIndex { index: usize, rank: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing LUT_3D_SIZE header")]
    MissingSize,

    #[error("wrong line count: expected {expected} data lines, found {found}")]
    WrongLineCount { expected: usize, found: usize },

    #[error("1D LUT keyword present; only 3D LUTs are supported")]
    Unsupported1D,

    #[error("unsupported model version: {0}")]
    Version(String),

    #[error("inconsistent shapes: {0}")]
    InconsistentShapes(String),

    #[error("unsupported image format")]
    UnsupportedFormat,

    #[error("truncated data")]
    TruncatedData,

    #[error("image codec error: {0}")]
    Codec(String),
}
