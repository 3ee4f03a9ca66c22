//! Batch and layer normalization.

use std::sync::Mutex;

use dvit_tensor::Tensor;

use crate::error::{NnError, Result};
use crate::module::{join, Decay, Module};

pub const DEFAULT_EPS: f64 = 1e-5;

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(NnError::Config(format!("normalization eps must be positive, got {eps}")))
    }
}

/// Normalizes `x` over its last axis and applies `gamma`, `beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    check_eps(eps)?;
    let d = *x.shape().last().ok_or_else(|| NnError::shape("layer_norm", "scalar input"))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(NnError::shape(
            "layer_norm",
            format!("affine {:?}/{:?} for last axis {d}", gamma.shape(), beta.shape()),
        ));
    }
    let rows = x.numel() / d;
    let xd = x.data();
    let (g, b) = (gamma.data(), beta.data());
    let mut out = vec![0.0; x.numel()];
    let mut xhat = vec![0.0; x.numel()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = h * g[j] + b[j];
        }
    }
    Ok(Tensor::from_op(
        out,
        x.shape(),
        "layer_norm",
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |grad, parents, _| {
            let g = parents[1].data();
            let mut gx = vec![0.0; rows * d];
            let mut gg = vec![0.0; d];
            let mut gb = vec![0.0; d];
            for r in 0..rows {
                let go = &grad[r * d..(r + 1) * d];
                let xh = &xhat[r * d..(r + 1) * d];
                let mut sum_dh = 0.0;
                let mut sum_dh_xh = 0.0;
                for j in 0..d {
                    let dh = go[j] * g[j];
                    sum_dh += dh;
                    sum_dh_xh += dh * xh[j];
                    gg[j] += go[j] * xh[j];
                    gb[j] += go[j];
                }
                let (m1, m2) = (sum_dh / d as f64, sum_dh_xh / d as f64);
                for j in 0..d {
                    gx[r * d + j] = rstd[r] * (go[j] * g[j] - m1 - xh[j] * m2);
                }
            }
            vec![Some(gx), Some(gg), Some(gb)]
        }),
    )?)
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: Tensor::param(vec![1.0; dim], &[dim])?,
            beta: Tensor::param(vec![0.0; dim], &[dim])?,
            eps: DEFAULT_EPS,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gamma, &self.beta, self.eps)
    }
}

impl Module for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        f(&join(prefix, "weight"), &self.gamma, Decay::Skip);
        f(&join(prefix, "bias"), &self.beta, Decay::Skip);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
    }
}

/// Per-channel normalization of an NCHW map with running statistics.
#[derive(Debug)]
pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
    pub momentum: f64,
    /// `[running_mean, running_var]`
    running: Mutex<[Tensor; 2]>,
}

impl Clone for BatchNorm2d {
    fn clone(&self) -> Self {
        BatchNorm2d {
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            eps: self.eps,
            momentum: self.momentum,
            running: Mutex::new(self.running_stats()),
        }
    }
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: Tensor::param(vec![1.0; channels], &[channels])?,
            beta: Tensor::param(vec![0.0; channels], &[channels])?,
            eps: DEFAULT_EPS,
            momentum: 0.1,
            running: Mutex::new([Tensor::zeros(&[channels])?, Tensor::ones(&[channels])?]),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn running_stats(&self) -> [Tensor; 2] {
        self.running.lock().expect("batch norm stats poisoned").clone()
    }

    pub fn set_running_stats(&self, mean: Tensor, var: Tensor) -> Result<()> {
        let c = self.channels();
        if mean.shape() != [c] || var.shape() != [c] {
            return Err(NnError::shape("batch_norm", format!("running stats for {c} channels")));
        }
        *self.running.lock().expect("batch norm stats poisoned") = [mean, var];
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        check_eps(self.eps)?;
        let s = x.shape();
        if s.len() != 4 || s[1] != self.channels() {
            return Err(NnError::shape(
                "batch_norm",
                format!("expected N×{}×H×W, got {s:?}", self.channels()),
            ));
        }
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        let count = n * hw;
        if training && n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let xd = x.data();
        let (mean, var) = if training {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut acc = 0.0;
                for b in 0..n {
                    acc += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().sum::<f64>();
                }
                let m = acc / count as f64;
                let mut sq = 0.0;
                for b in 0..n {
                    sq += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                        .iter()
                        .map(|v| (v - m).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = sq / count as f64;
            }
            let mut run = self.running.lock().expect("batch norm stats poisoned");
            let unbias = count as f64 / (count - 1) as f64;
            let mo = self.momentum;
            let rm: Vec<f64> = run[0].data().iter().zip(&mean).map(|(r, m)| (1.0 - mo) * r + mo * m).collect();
            let rv: Vec<f64> = run[1]
                .data()
                .iter()
                .zip(&var)
                .map(|(r, v)| (1.0 - mo) * r + mo * v * unbias)
                .collect();
            *run = [Tensor::new(rm, &[c])?, Tensor::new(rv, &[c])?];
            (mean, var)
        } else {
            let run = self.running_stats();
            (run[0].to_vec(), run[1].to_vec())
        };
        let eps = self.eps;
        let rstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, bt) = (self.gamma.data(), self.beta.data());
        let mut out = vec![0.0; x.numel()];
        let mut xhat = vec![0.0; x.numel()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    let h = (xd[i] - mean[ch]) * rstd[ch];
                    xhat[i] = h;
                    out[i] = h * g[ch] + bt[ch];
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            s,
            "batch_norm",
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |grad, parents, _| {
                let g = parents[1].data();
                let mut gx = vec![0.0; grad.len()];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for ch in 0..c {
                    let mut sum_go = 0.0;
                    let mut sum_go_xh = 0.0;
                    for b in 0..n {
                        let base = (b * c + ch) * hw;
                        for i in base..base + hw {
                            sum_go += grad[i];
                            sum_go_xh += grad[i] * xhat[i];
                        }
                    }
                    gg[ch] = sum_go_xh;
                    gb[ch] = sum_go;
                    let k = g[ch] * rstd[ch];
                    for b in 0..n {
                        let base = (b * c + ch) * hw;
                        for i in base..base + hw {
                            gx[i] = if training {
                                k * (grad[i] - sum_go / count as f64 - xhat[i] * sum_go_xh / count as f64)
                            } else {
                                k * grad[i]
                            };
                        }
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            }),
        )?)
    }
}

impl Module for BatchNorm2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        f(&join(prefix, "weight"), &self.gamma, Decay::Skip);
        f(&join(prefix, "bias"), &self.beta, Decay::Skip);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        let [m, v] = self.running_stats();
        f(&join(prefix, "running_mean"), &m);
        f(&join(prefix, "running_var"), &v);
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let run = self.running.get_mut().expect("batch norm stats poisoned");
        f(&join(prefix, "running_mean"), &mut run[0]);
        f(&join(prefix, "running_var"), &mut run[1]);
    }
}
