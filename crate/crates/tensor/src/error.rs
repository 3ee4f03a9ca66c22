use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?} (expected {expected})")]
    DataLength {
        len: usize,
        shape: Vec<usize>,
        expected: usize,
    },
    #[error("invalid shape {0:?}: every dimension must be positive")]
    InvalidShape(Vec<usize>),
    #[error("cannot broadcast shapes {a:?} and {b:?}")]
    Broadcast { a: Vec<usize>, b: Vec<usize> },
    #[error("matmul dimension mismatch: {a:?} x {b:?}")]
    Matmul { a: Vec<usize>, b: Vec<usize> },
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("tensor dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
