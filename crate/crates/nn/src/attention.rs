//! Multi-head self-attention and the transformer MLP.

use dvit_tensor::Tensor;
use rand::Rng;

use crate::dropout::dropout;
use crate::error::{NnError, Result};
use crate::linear::Linear;
use crate::module::{join, Ctx, Decay, Module};

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub head_dim: usize,
    pub attn_dropout: f64,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, head_dim: usize, attn_dropout: f64, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || head_dim == 0 {
            return Err(NnError::Config(format!("attention needs heads and head_dim > 0, got {heads}×{head_dim}")));
        }
        let inner = heads * head_dim;
        Ok(MultiHeadAttention {
            q: Linear::new(dim, inner, rng)?,
            k: Linear::new(dim, inner, rng)?,
            v: Linear::new(dim, inner, rng)?,
            proj: Linear::new(inner, dim, rng)?,
            heads,
            head_dim,
            attn_dropout,
        })
    }

    fn split_heads(&self, t: &Tensor, b: usize, n: usize) -> Result<Tensor> {
        let (h, d) = (self.heads, self.head_dim);
        Ok(t.reshape(&[b, n, h, d])?.permute(&[0, 2, 1, 3])?.reshape(&[b * h, n, d])?)
    }

    /// Self-attention over `(B, T, D)` or `(T, D)` tokens.
    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let batched = match x.rank() {
            3 => x.clone(),
            2 => x.reshape(&[1, x.shape()[0], x.shape()[1]])?,
            _ => return Err(NnError::shape("attention", format!("expected (B,T,D) or (T,D), got {:?}", x.shape()))),
        };
        let (b, n) = (batched.shape()[0], batched.shape()[1]);
        let (h, d) = (self.heads, self.head_dim);
        let q = self.split_heads(&self.q.forward(&batched)?, b, n)?;
        let k = self.split_heads(&self.k.forward(&batched)?, b, n)?;
        let v = self.split_heads(&self.v.forward(&batched)?, b, n)?;
        let scores = q.matmul(&k.transpose(1, 2)?)?.mul_scalar(1.0 / (d as f64).sqrt());
        let attn = dropout(&scores.softmax(2)?, self.attn_dropout, ctx)?;
        let mixed = attn
            .matmul(&v)?
            .reshape(&[b, h, n, d])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, n, h * d])?;
        let out = self.proj.forward(&mixed)?;
        if x.rank() == 2 {
            Ok(out.reshape(x.shape())?)
        } else {
            Ok(out)
        }
    }
}

impl Module for MultiHeadAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.q.visit_mut(&join(prefix, "q"), f);
        self.k.visit_mut(&join(prefix, "k"), f);
        self.v.visit_mut(&join(prefix, "v"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}

/// `fc2(dropout(gelu(fc1 x)))` followed by the same dropout.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(dim: usize, hidden: usize, dropout: f64, rng: &mut impl Rng) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::new(dim, hidden, rng)?,
            fc2: Linear::new(hidden, dim, rng)?,
            dropout,
        })
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let h = dropout(&self.fc1.forward(x)?.gelu(), self.dropout, ctx)?;
        dropout(&self.fc2.forward(&h)?, self.dropout, ctx)
    }
}

impl Module for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
