use std::path::{Path, PathBuf};

use dvit_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config keys or argument combinations. Exit code 1.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl From<dvit_tensor::TensorError> for CliError {
    fn from(e: dvit_tensor::TensorError) -> Self {
        CliError::Core(CoreError::from(e))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
