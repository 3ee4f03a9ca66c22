//! Gradient-weighted class activation maps.

use dvit_nn::{zero_grads, Ctx};
use dvit_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::image::{resize_bilinear, Image};
use crate::error::{CoreError, Result};
use crate::model::{Dvit, LAYER_NAMES};

/// Layer used when none is given: the last deformable stage.
pub const DEFAULT_LAYER: &str = "stage4";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major values in [0, 1].
    pub data: Vec<f64>,
    pub layer: String,
    pub class_id: usize,
}

impl Heatmap {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Fraction of total heat falling where `mask` is non-zero. Zero maps give 0.
    pub fn mass_in(&self, mask: &[u8]) -> Result<f64> {
        if mask.len() != self.data.len() {
            return Err(CoreError::Config(format!(
                "mask has {} pixels, heatmap {}",
                mask.len(),
                self.data.len()
            )));
        }
        let total: f64 = self.data.iter().sum();
        if total <= 0.0 {
            return Ok(0.0);
        }
        let inside: f64 = self.data.iter().zip(mask).filter(|(_, &m)| m != 0).map(|(v, _)| v).sum();
        Ok(inside / total)
    }
}

/// A model that can expose one spatial activation alongside its logits.
pub trait CamModel {
    /// Runs one eval-mode forward pass on a `(1, C, H, W)` input and returns
    /// the activation at `layer` and the `(1, K)` logits, both on the graph.
    fn activation_and_logits(&self, input: &Tensor, layer: &str) -> Result<(Tensor, Tensor)>;

    /// Drops any parameter gradients accumulated by the CAM backward pass.
    fn clear_grads(&self) {}
}

impl CamModel for Dvit {
    fn activation_and_logits(&self, input: &Tensor, layer: &str) -> Result<(Tensor, Tensor)> {
        let mut ctx = Ctx::eval();
        if layer == "tokens" {
            let trace = self.forward_traced(input, &mut ctx)?;
            return Ok((trace.tokens, trace.logits));
        }
        if !LAYER_NAMES.contains(&layer) {
            return Err(CoreError::UnknownLayer(layer.to_string()));
        }
        let trace = self.forward_traced(input, &mut ctx)?;
        let act = trace.layer(layer).cloned().ok_or_else(|| CoreError::UnknownLayer(layer.to_string()))?;
        Ok((act, trace.logits))
    }

    fn clear_grads(&self) {
        zero_grads(self);
    }
}

/// Min-max normalizes in place. An all-zero map stays zero; a constant
/// positive map becomes all ones.
pub fn normalize_map(data: &mut [f64]) {
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        data.iter_mut().for_each(|v| *v = 0.0);
    } else if max > min {
        data.iter_mut().for_each(|v| *v = (*v - min) / (max - min));
    } else {
        data.iter_mut().for_each(|v| *v = 1.0);
    }
}

/// Raw map `ReLU(Σ_r α_r A_r)` with `α_r` the spatial mean of the gradient.
///
/// `act` and `grad` are `C×h×w`, row-major.
pub fn weighted_map(act: &[f64], grad: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut raw = vec![0.0; hw];
    for r in 0..channels {
        let g = &grad[r * hw..(r + 1) * hw];
        let alpha = g.iter().sum::<f64>() / hw as f64;
        for (o, a) in raw.iter_mut().zip(&act[r * hw..(r + 1) * hw]) {
            *o += alpha * a;
        }
    }
    raw.iter_mut().for_each(|v| *v = v.max(0.0));
    raw
}

/// Heatmap for `target` at `layer`, upsampled to the input size.
///
/// `input` is `C×H×W` or `1×C×H×W`.
pub fn grad_cam(model: &dyn CamModel, input: &Tensor, target: usize, layer: &str) -> Result<Heatmap> {
    let input = match input.rank() {
        3 => input.reshape(&[1, input.shape()[0], input.shape()[1], input.shape()[2]])?,
        4 if input.shape()[0] == 1 => input.clone(),
        _ => {
            return Err(CoreError::Config(format!("grad_cam takes one C×H×W image, got {:?}", input.shape())));
        }
    };
    let input = input.detach().requires_grad(true);
    let (in_h, in_w) = (input.shape()[2], input.shape()[3]);
    let (act, logits) = model.activation_and_logits(&input, layer)?;
    let s = act.shape().to_vec();
    if s.len() != 4 || s[0] != 1 {
        model.clear_grads();
        return Err(CoreError::Config(format!("layer {layer:?} is not spatial (shape {s:?})")));
    }
    let classes = *logits.shape().last().unwrap_or(&0);
    if target >= classes {
        return Err(CoreError::Label { label: target, classes });
    }
    if !act.tracks_grad() {
        return Err(CoreError::Config(format!("activation at {layer:?} is not on the gradient graph")));
    }
    let score = logits.reshape(&[classes])?.select(0, target)?;
    let grads = score.backward()?;
    model.clear_grads();
    let (c, h, w) = (s[1], s[2], s[3]);
    let raw = match grads.get(&act) {
        Some(g) => weighted_map(act.data(), g, c, h, w),
        None => vec![0.0; h * w],
    };
    let up = resize_bilinear(&Image { height: h, width: w, channels: 1, data: raw }, in_h, in_w);
    let mut data = up.data;
    normalize_map(&mut data);
    Ok(Heatmap { height: in_h, width: in_w, data, layer: layer.to_string(), class_id: target })
}
