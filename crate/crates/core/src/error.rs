use std::path::PathBuf;

use dvit_nn::NnError;
use dvit_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint config does not match: {0}")]
    ConfigMismatch(String),
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
    #[error("class {0:?} has no entries")]
    EmptyClass(String),
    #[error("{0}")]
    Split(String),
    #[error("image {path}: {detail}")]
    Image { path: PathBuf, detail: String },
    #[error("canny thresholds must satisfy low < high, got {low} >= {high}")]
    Thresholds { low: f64, high: f64 },
    #[error("endpoint: {0}")]
    Endpoint(String),
    #[error("malformed endpoint response: {0}")]
    Response(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{0}")]
    Metric(String),
    #[error("kid needs at least {need} samples per set with subset size {subset}, got {have}")]
    KidSamples { need: usize, subset: usize, have: usize },
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("no score in 0..=3 found in response: {0:?}")]
    Verdict(String),
    #[error("split {0:?} is empty")]
    EmptySplit(String),
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
