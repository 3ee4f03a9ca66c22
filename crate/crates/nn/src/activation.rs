use dvit_tensor::Tensor;

use crate::error::Result;

/// Tanh-approximated GELU, `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
pub fn gelu(x: &Tensor) -> Tensor {
    x.gelu()
}

/// Max-subtracted softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    Ok(x.softmax(axis)?)
}
