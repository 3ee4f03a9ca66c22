use dvit_tensor::Tensor;
use rand::Rng;

use crate::error::{NnError, Result};
use crate::init::{trunc_normal, INIT_STD};
use crate::module::{join, Decay, Module};

/// `y = x·W + b` over the last axis. `W` is stored `(in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let weight = Tensor::param(trunc_normal(rng, in_dim * out_dim, INIT_STD), &[in_dim, out_dim])?;
        let bias = Some(Tensor::param(vec![0.0; out_dim], &[out_dim])?);
        Ok(Linear { weight, bias })
    }

    pub fn from_parts(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(NnError::shape("linear", format!("weight must be rank 2, got {:?}", weight.shape())));
        }
        if let Some(b) = &bias {
            if b.shape() != [weight.shape()[1]] {
                return Err(NnError::shape(
                    "linear",
                    format!("bias {:?} does not match weight {:?}", b.shape(), weight.shape()),
                ));
            }
        }
        Ok(Linear { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let last = *shape.last().unwrap_or(&0);
        if last != self.in_dim() {
            return Err(NnError::shape(
                "linear",
                format!("input {:?} does not end in {}", shape, self.in_dim()),
            ));
        }
        let rows = x.numel() / last;
        let flat = if shape.len() == 2 { x.clone() } else { x.reshape(&[rows, last])? };
        let mut y = flat.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            y = y.add(b)?;
        }
        if shape.len() == 2 {
            return Ok(y);
        }
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().expect("rank >= 1") = self.out_dim();
        Ok(y.reshape(&out_shape)?)
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        f(&join(prefix, "weight"), &self.weight, Decay::Apply);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b, Decay::Skip);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}
