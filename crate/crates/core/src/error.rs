use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {width}x{height} image, {kh}x{kw} kernel footprint")]
    ImageTooSmall {
        width: usize,
        height: usize,
        kh: usize,
        kw: usize,
    },
    #[error("decimate requires even dims, got {width}x{height}")]
    OddDims { width: usize, height: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image dimensions {width}x{height} must be divisible by {divisor}")]
    NotDivisible {
        width: usize,
        height: usize,
        divisor: usize,
    },
    #[error("homography exceeds buffer: needs {needed} lines, budget is {budget}")]
    HomographyExceedsBuffer { needed: usize, budget: usize },
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("bad initialization: {0}")]
    BadInitialization(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown operation: {0}")]
    UnknownOp(String),
    #[error("malformed image: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
