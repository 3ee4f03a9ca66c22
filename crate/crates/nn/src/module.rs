//! Parameter ownership and traversal shared by every layer.

use dvit_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Whether AdamW applies decoupled weight decay to a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    Apply,
    Skip,
}

/// A layer that owns named parameters (and optionally non-trainable
/// buffers such as batch-norm running statistics).
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn visit_buffers(&self, _prefix: &str, _f: &mut dyn FnMut(&str, &Tensor)) {}
    fn visit_buffers_mut(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut Tensor)) {}
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_params(m: &dyn Module) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    m.visit("", &mut |n, t, _| out.push((n.to_string(), t.clone())));
    out
}

pub fn named_buffers(m: &dyn Module) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    m.visit_buffers("", &mut |n, t| out.push((n.to_string(), t.clone())));
    out
}

pub fn param_count(m: &dyn Module) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, t, _| n += t.numel());
    n
}

pub fn zero_grads(m: &dyn Module) {
    m.visit("", &mut |_, t, _| t.zero_grad());
}

/// A loose bag of parameters, for optimizers over ad-hoc tensors.
#[derive(Debug, Default, Clone)]
pub struct ParamSet {
    pub params: Vec<(String, Tensor, Decay)>,
}

impl ParamSet {
    pub fn push(&mut self, name: &str, t: Tensor, decay: Decay) {
        self.params.push((name.to_string(), t, decay));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.0 == name).map(|p| &p.1)
    }
}

impl Module for ParamSet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        for (n, t, d) in &self.params {
            f(&join(prefix, n), t, *d);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (n, t, _) in &mut self.params {
            f(&join(prefix, n), t);
        }
    }
}

/// Forward-pass mode plus the random stream used by dropout and DropPath.
pub struct Ctx {
    pub training: bool,
    rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Ctx {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval() -> Self {
        Ctx {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
