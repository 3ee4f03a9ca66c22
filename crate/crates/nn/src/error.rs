use dvit_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("batch norm needs a batch of at least 2 in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("missing gradient for parameter {0}")]
    MissingGrad(String),
}

impl NnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NnError::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NnError>;
