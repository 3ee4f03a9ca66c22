//! Deformable aggregation without softmax-normalized modulation, and the
//! residual block built around it.
//!
//! Feature maps are channels-last (`N×H×W×C`) inside this module.

use dvit_tensor::Tensor;
use rand::Rng;
use rayon::prelude::*;

use crate::attention::Mlp;
use crate::dropout::drop_path;
use crate::error::{NnError, Result};
use crate::linear::Linear;
use crate::module::{join, Ctx, Decay, Module};
use crate::norm::LayerNorm;
use crate::sample::taps;

#[derive(Debug, Clone, PartialEq)]
pub struct Dcnv4Config {
    pub channels: usize,
    pub groups: usize,
    pub kernel_points: usize,
    pub offset_scale: f64,
    /// Initial value of the per-channel residual scales; `None` disables them.
    pub layer_scale_init: Option<f64>,
    pub droppath_rate: f64,
    pub mlp_ratio: f64,
}

impl Dcnv4Config {
    pub fn new(channels: usize) -> Self {
        Dcnv4Config {
            channels,
            groups: (channels / 16).max(1),
            kernel_points: 9,
            offset_scale: 1.0,
            layer_scale_init: Some(1e-5),
            droppath_rate: 0.0,
            mlp_ratio: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.channels == 0 || self.groups == 0 || self.channels % self.groups != 0 {
            return bad(format!("{} channels not divisible into {} groups", self.channels, self.groups));
        }
        if grid_side(self.kernel_points).is_none() {
            return bad(format!("kernel_points {} is not a positive square", self.kernel_points));
        }
        if !(self.offset_scale > 0.0 && self.offset_scale.is_finite()) {
            return bad(format!("offset_scale must be positive, got {}", self.offset_scale));
        }
        if !(0.0..1.0).contains(&self.droppath_rate) {
            return bad(format!("droppath rate {} outside [0, 1)", self.droppath_rate));
        }
        if !(self.mlp_ratio > 0.0) || ((self.channels as f64 * self.mlp_ratio).round() as usize) == 0 {
            return bad(format!("mlp_ratio {} gives an empty hidden layer", self.mlp_ratio));
        }
        Ok(())
    }

    pub fn offset_channels(&self) -> usize {
        self.groups * self.kernel_points * 3
    }
}

fn grid_side(k: usize) -> Option<usize> {
    let s = (k as f64).sqrt().round() as usize;
    (k > 0 && s * s == k).then_some(s)
}

/// Reference offsets `(dy, dx)` of a centered square grid, row-major.
pub fn reference_points(k: usize) -> Result<Vec<(f64, f64)>> {
    let s = grid_side(k).ok_or_else(|| NnError::Config(format!("kernel_points {k} is not a positive square")))?;
    let c = (s as f64 - 1.0) / 2.0;
    Ok((0..k).map(|i| ((i / s) as f64 - c, (i % s) as f64 - c)).collect())
}

#[derive(Clone, Copy)]
struct AggGeom {
    h: usize,
    w: usize,
    c: usize,
    groups: usize,
    k: usize,
    scale: f64,
}

impl AggGeom {
    fn cg(&self) -> usize {
        self.c / self.groups
    }

    fn om(&self) -> usize {
        self.groups * self.k * 3
    }

    /// Sampling taps for point `k` of group `g` at pixel `(y, x)`.
    fn taps_at(&self, om: &[f64], refs: &[(f64, f64)], y: usize, x: usize, g: usize, k: usize) -> ([crate::sample::Tap; 4], f64) {
        let base = (g * self.k + k) * 3;
        let (ry, rx) = refs[k];
        let py = y as f64 + ry + self.scale * om[base];
        let px = x as f64 + rx + self.scale * om[base + 1];
        (taps(py, px, self.h, self.w), om[base + 2])
    }
}

/// Deformable aggregation of `value (N,H,W,C)` driven by `offmod
/// (N,H,W,G·K·3)`.
///
/// For group `g` and point `k` the triplet at channel `(g·K + k)·3` holds
/// `(Δy, Δx, m)`. Each output channel of group `g` at pixel `p` is
/// `Σ_k m · value(p + r_k + offset_scale·Δ)` with bilinear, zero-padded
/// sampling. `m` is used as given.
pub fn deform_aggregate(value: &Tensor, offmod: &Tensor, groups: usize, kernel_points: usize, offset_scale: f64) -> Result<Tensor> {
    let vs = value.shape();
    if vs.len() != 4 || groups == 0 || vs[3] % groups != 0 {
        return Err(NnError::shape(
            "deform_aggregate",
            format!("value {vs:?} is not N×H×W×C with C divisible by {groups} groups"),
        ));
    }
    let refs = reference_points(kernel_points)?;
    let g = AggGeom {
        h: vs[1],
        w: vs[2],
        c: vs[3],
        groups,
        k: kernel_points,
        scale: offset_scale,
    };
    let n = vs[0];
    let expect = [n, g.h, g.w, g.om()];
    if offmod.shape() != expect {
        return Err(NnError::shape(
            "deform_aggregate",
            format!("offsets/modulation {:?}, expected {expect:?}", offmod.shape()),
        ));
    }
    let (vd, od) = (value.data(), offmod.data());
    let (hw, c, om, cg) = (g.h * g.w, g.c, g.om(), g.cg());
    let mut out = vec![0.0; n * hw * c];
    out.par_chunks_mut(g.w * c).enumerate().for_each(|(row, orow)| {
        let (b, y) = (row / g.h, row % g.h);
        let vplane = &vd[b * hw * c..(b + 1) * hw * c];
        for x in 0..g.w {
            let pix = b * hw + y * g.w + x;
            let omp = &od[pix * om..(pix + 1) * om];
            let o = &mut orow[x * c..(x + 1) * c];
            for gi in 0..groups {
                let og = &mut o[gi * cg..(gi + 1) * cg];
                for k in 0..g.k {
                    let (ts, m) = g.taps_at(omp, &refs, y, x, gi, k);
                    for t in &ts {
                        if let Some(j) = t.index {
                            let coef = m * t.weight;
                            let src = &vplane[j * c + gi * cg..j * c + (gi + 1) * cg];
                            og.iter_mut().zip(src).for_each(|(a, v)| *a += coef * v);
                        }
                    }
                }
            }
        }
    });
    Ok(Tensor::from_op(
        out,
        vs,
        "deform_aggregate",
        vec![value.clone(), offmod.clone()],
        Box::new(move |grad, parents, _| {
            let (vd, od) = (parents[0].data(), parents[1].data());
            let per_item: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map(|b| {
                    let vplane = &vd[b * hw * c..(b + 1) * hw * c];
                    let mut gv = vec![0.0; hw * c];
                    let mut go = vec![0.0; hw * om];
                    for y in 0..g.h {
                        for x in 0..g.w {
                            let p = y * g.w + x;
                            let omp = &od[(b * hw + p) * om..(b * hw + p + 1) * om];
                            let gout = &grad[(b * hw + p) * c..(b * hw + p + 1) * c];
                            for gi in 0..groups {
                                let gg = &gout[gi * cg..(gi + 1) * cg];
                                for k in 0..g.k {
                                    let (ts, m) = g.taps_at(omp, &refs, y, x, gi, k);
                                    let (mut dm, mut dy, mut dx) = (0.0, 0.0, 0.0);
                                    for t in &ts {
                                        let Some(j) = t.index else { continue };
                                        let off = j * c + gi * cg;
                                        let dot: f64 = gg.iter().zip(&vplane[off..off + cg]).map(|(a, v)| a * v).sum();
                                        dm += t.weight * dot;
                                        dy += t.dwy * dot;
                                        dx += t.dwx * dot;
                                        let coef = m * t.weight;
                                        gv[off..off + cg].iter_mut().zip(gg).for_each(|(d, a)| *d += coef * a);
                                    }
                                    let base = p * om + (gi * g.k + k) * 3;
                                    go[base] += m * g.scale * dy;
                                    go[base + 1] += m * g.scale * dx;
                                    go[base + 2] += dm;
                                }
                            }
                        }
                    }
                    (gv, go)
                })
                .collect();
            let mut gv = Vec::with_capacity(n * hw * c);
            let mut go = Vec::with_capacity(n * hw * om);
            for (a, b) in per_item {
                gv.extend(a);
                go.extend(b);
            }
            vec![Some(gv), Some(go)]
        }),
    )?)
}

/// Value projection, offset/modulation prediction, aggregation and output
/// projection.
#[derive(Debug, Clone)]
pub struct Dcnv4 {
    pub value_proj: Linear,
    pub offset_proj: Linear,
    pub output_proj: Linear,
    pub groups: usize,
    pub kernel_points: usize,
    pub offset_scale: f64,
}

impl Dcnv4 {
    pub fn new(cfg: &Dcnv4Config, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        Ok(Dcnv4 {
            value_proj: Linear::new(c, c, rng)?,
            offset_proj: Linear::new(c, cfg.offset_channels(), rng)?,
            output_proj: Linear::new(c, c, rng)?,
            groups: cfg.groups,
            kernel_points: cfg.kernel_points,
            offset_scale: cfg.offset_scale,
        })
    }

    /// Aggregated features before the output projection.
    pub fn aggregate(&self, x: &Tensor) -> Result<Tensor> {
        let value = self.value_proj.forward(x)?;
        let offmod = self.offset_proj.forward(x)?;
        deform_aggregate(&value, &offmod, self.groups, self.kernel_points, self.offset_scale)
    }

    /// `x` is `N×H×W×C`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.output_proj.forward(&self.aggregate(x)?)
    }

    /// Same as [`Dcnv4::forward`] on an `N×C×H×W` map.
    pub fn forward_nchw(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 {
            return Err(NnError::shape("dcnv4", format!("expected N×C×H×W, got {:?}", x.shape())));
        }
        let y = self.forward(&x.permute(&[0, 2, 3, 1])?)?;
        Ok(y.permute(&[0, 3, 1, 2])?)
    }
}

impl Module for Dcnv4 {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        self.value_proj.visit(&join(prefix, "value_proj"), f);
        self.offset_proj.visit(&join(prefix, "offset_proj"), f);
        self.output_proj.visit(&join(prefix, "output_proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.value_proj.visit_mut(&join(prefix, "value_proj"), f);
        self.offset_proj.visit_mut(&join(prefix, "offset_proj"), f);
        self.output_proj.visit_mut(&join(prefix, "output_proj"), f);
    }
}

/// `x + DropPath(γ₁·DCN(LN x))`, then `+ DropPath(γ₂·MLP(LN ·))`.
#[derive(Debug, Clone)]
pub struct Dcnv4Block {
    pub norm1: LayerNorm,
    pub dcn: Dcnv4,
    pub gamma1: Option<Tensor>,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
    pub gamma2: Option<Tensor>,
    pub droppath_rate: f64,
}

impl Dcnv4Block {
    pub fn new(cfg: &Dcnv4Config, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let hidden = (c as f64 * cfg.mlp_ratio).round() as usize;
        let scale = |v: f64| Tensor::param(vec![v; c], &[c]);
        Ok(Dcnv4Block {
            norm1: LayerNorm::new(c)?,
            dcn: Dcnv4::new(cfg, rng)?,
            gamma1: cfg.layer_scale_init.map(scale).transpose()?,
            norm2: LayerNorm::new(c)?,
            mlp: Mlp::new(c, hidden, 0.0, rng)?,
            gamma2: cfg.layer_scale_init.map(scale).transpose()?,
            droppath_rate: cfg.droppath_rate,
        })
    }

    fn residual(&self, x: &Tensor, branch: Tensor, gamma: Option<&Tensor>, ctx: &mut Ctx) -> Result<Tensor> {
        let scaled = match gamma {
            Some(g) => branch.mul(g)?,
            None => branch,
        };
        Ok(x.add(&drop_path(&scaled, self.droppath_rate, ctx)?)?)
    }

    /// `x` is `N×H×W×C`.
    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let a = self.dcn.forward(&self.norm1.forward(x)?)?;
        let x = self.residual(x, a, self.gamma1.as_ref(), ctx)?;
        let m = self.mlp.forward(&self.norm2.forward(&x)?, ctx)?;
        self.residual(&x, m, self.gamma2.as_ref(), ctx)
    }
}

impl Module for Dcnv4Block {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.dcn.visit(&join(prefix, "dcn"), f);
        if let Some(g) = &self.gamma1 {
            f(&join(prefix, "gamma1"), g, Decay::Skip);
        }
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
        if let Some(g) = &self.gamma2 {
            f(&join(prefix, "gamma2"), g, Decay::Skip);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.dcn.visit_mut(&join(prefix, "dcn"), f);
        if let Some(g) = &mut self.gamma1 {
            f(&join(prefix, "gamma1"), g);
        }
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        self.mlp.visit_mut(&join(prefix, "mlp"), f);
        if let Some(g) = &mut self.gamma2 {
            f(&join(prefix, "gamma2"), g);
        }
    }
}
