//! AdamW with decoupled weight decay.

use std::collections::BTreeMap;

use dvit_tensor::Tensor;

use crate::error::{NnError, Result};
use crate::module::{Decay, Module};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW {
            cfg,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates every parameter of `model` from the gradient accumulated on
    /// it, replacing each with a fresh leaf.
    ///
    /// Fails without touching anything if any parameter lacks a gradient.
    pub fn step(&mut self, model: &mut dyn Module) -> Result<()> {
        let mut grads: BTreeMap<String, (Vec<f64>, Decay)> = BTreeMap::new();
        let mut missing = None;
        model.visit("", &mut |name, t, decay| {
            if missing.is_some() {
                return;
            }
            match t.grad() {
                Some(g) => {
                    grads.insert(name.to_string(), (g, decay));
                }
                None => missing = Some(name.to_string()),
            }
        });
        if let Some(name) = missing {
            return Err(NnError::MissingGrad(name));
        }
        for (name, (g, _)) in &grads {
            if self.state.get(name).is_some_and(|m| m.m.len() != g.len()) {
                return Err(NnError::Config(format!("optimizer state for {name} has the wrong size")));
            }
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let state = &mut self.state;
        let mut failure = None;
        model.visit_mut("", &mut |name, t| {
            let (g, decay) = &grads[name];
            let mom = state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            if mom.m.len() != g.len() {
                failure = Some(NnError::Config(format!("optimizer state for {name} has the wrong size")));
                return;
            }
            let wd = if *decay == Decay::Apply { weight_decay } else { 0.0 };
            let mut p = t.to_vec();
            for i in 0..p.len() {
                p[i] -= lr * wd * p[i];
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g[i];
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = mom.m[i] / bc1;
                let vh = mom.v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
            match Tensor::param(p, t.shape()) {
                Ok(np) => *t = np,
                Err(e) => failure = Some(e.into()),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Moment tensors as `(m.<name>, …)`, `(v.<name>, …)` pairs.
    pub fn export_state(&self, model: &dyn Module) -> Result<Vec<(String, Tensor)>> {
        let mut shapes = BTreeMap::new();
        model.visit("", &mut |n, t, _| {
            shapes.insert(n.to_string(), t.shape().to_vec());
        });
        let mut out = Vec::new();
        for (name, mom) in &self.state {
            let shape = shapes
                .get(name)
                .ok_or_else(|| NnError::Config(format!("optimizer state for unknown parameter {name}")))?;
            out.push((format!("m.{name}"), Tensor::new(mom.m.clone(), shape)?));
            out.push((format!("v.{name}"), Tensor::new(mom.v.clone(), shape)?));
        }
        Ok(out)
    }

    /// Restores moments exported by [`AdamW::export_state`].
    pub fn import_state(&mut self, step: u64, tensors: &[(String, Tensor)]) -> Result<()> {
        let mut state: BTreeMap<String, Moments> = BTreeMap::new();
        for (key, t) in tensors {
            let (kind, name) = key
                .split_once('.')
                .ok_or_else(|| NnError::Config(format!("bad optimizer tensor name {key}")))?;
            let entry = state.entry(name.to_string()).or_insert_with(|| Moments {
                m: Vec::new(),
                v: Vec::new(),
            });
            match kind {
                "m" => entry.m = t.to_vec(),
                "v" => entry.v = t.to_vec(),
                _ => return Err(NnError::Config(format!("bad optimizer tensor name {key}"))),
            }
        }
        if let Some((name, _)) = state.iter().find(|(_, m)| m.m.len() != m.v.len()) {
            return Err(NnError::Config(format!("optimizer moments for {name} are incomplete")));
        }
        self.step = step;
        self.state = state;
        Ok(())
    }
}
