//! Model, data pipeline, metrics, explanation and training for DViT
//! land-cover classification.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use error::{CoreError, Result};
pub use model::{Dvit, ModelConfig, Trace, LAYER_NAMES};
