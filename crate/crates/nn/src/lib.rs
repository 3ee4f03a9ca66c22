//! Layers, losses and the optimizer used by the DViT model.

pub mod activation;
pub mod attention;
pub mod conv;
pub mod dcnv4;
pub mod dropout;
pub mod error;
pub mod init;
pub mod linear;
pub mod loss;
pub mod module;
pub mod norm;
pub mod optim;
pub mod sample;

pub use activation::{gelu, softmax};
pub use attention::{Mlp, MultiHeadAttention};
pub use conv::{conv2d, Conv2d};
pub use dcnv4::{deform_aggregate, reference_points, Dcnv4, Dcnv4Block, Dcnv4Config};
pub use dropout::{drop_path, dropout};
pub use error::{NnError, Result};
pub use linear::Linear;
pub use loss::cross_entropy;
pub use module::{named_buffers, named_params, param_count, zero_grads, Ctx, Decay, Module, ParamSet};
pub use norm::{layer_norm, BatchNorm2d, LayerNorm};
pub use optim::{AdamW, AdamWConfig};
pub use sample::bilinear_sample;
