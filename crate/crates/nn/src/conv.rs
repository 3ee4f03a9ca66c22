//! 2-D convolution (NCHW) via im2col.

use dvit_tensor::kernels::{gemm_nn, gemm_nt, gemm_tn};
use dvit_tensor::Tensor;
use rand::Rng;

use crate::error::{NnError, Result};
use crate::init::{trunc_normal, INIT_STD};
use crate::module::{join, Decay, Module};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn cols(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let hw = self.ho * self.wo;
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut col[row * hw..(row + 1) * hw];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            dst[oy * self.wo + ox] = if iy >= 0
                                && (iy as usize) < self.h
                                && ix >= 0
                                && (ix as usize) < self.w
                            {
                                x[(c * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], dx: &mut [f64]) {
        let hw = self.ho * self.wo;
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &col[row * hw..(row + 1) * hw];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                dx[(c * self.h + iy as usize) * self.w + ix as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution of `x (N,Cin,H,W)` with `weight (Cout,Cin,kh,kw)`.
///
/// Output spatial size is `floor((H + 2p − k)/s) + 1`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(NnError::shape("conv2d", format!("expected NCHW input and 4-d weight, got {xs:?} and {ws:?}")));
    }
    let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, wcin, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if cin != wcin {
        return Err(NnError::shape("conv2d", format!("input has {cin} channels, weight expects {wcin}")));
    }
    if stride == 0 {
        return Err(NnError::Config("conv2d stride must be positive".into()));
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(NnError::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * padding, w + 2 * padding),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(NnError::shape("conv2d", format!("bias {:?} for {cout} output channels", b.shape())));
        }
    }
    let g = Geometry {
        cin,
        h,
        w,
        kh,
        kw,
        stride,
        pad: padding,
        ho: (h + 2 * padding - kh) / stride + 1,
        wo: (w + 2 * padding - kw) / stride + 1,
    };
    let (hw, kk) = (g.ho * g.wo, g.cols());
    let mut out = vec![0.0; n * cout * hw];
    let mut col = vec![0.0; kk * hw];
    let xd = x.data();
    for b in 0..n {
        g.im2col(&xd[b * cin * h * w..(b + 1) * cin * h * w], &mut col);
        let o = &mut out[b * cout * hw..(b + 1) * cout * hw];
        gemm_nn(weight.data(), &col, cout, kk, hw, o, false);
        if let Some(bias) = bias {
            for (co, &bv) in bias.data().iter().enumerate() {
                o[co * hw..(co + 1) * hw].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Ok(Tensor::from_op(
        out,
        &[n, cout, g.ho, g.wo],
        "conv2d",
        parents,
        Box::new(move |grad, parents, _| {
            let (x, w) = (&parents[0], &parents[1]);
            let need_x = x.tracks_grad();
            let need_w = w.tracks_grad();
            let mut gx = need_x.then(|| vec![0.0; x.numel()]);
            let mut gw = need_w.then(|| vec![0.0; w.numel()]);
            let mut col = vec![0.0; kk * hw];
            let mut dcol = vec![0.0; kk * hw];
            let xd = x.data();
            let chw = g.cin * g.h * g.w;
            for b in 0..n {
                let gb = &grad[b * cout * hw..(b + 1) * cout * hw];
                if let Some(gw) = gw.as_mut() {
                    g.im2col(&xd[b * chw..(b + 1) * chw], &mut col);
                    gemm_nt(gb, &col, cout, hw, kk, gw, true);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm_tn(w.data(), gb, kk, cout, hw, &mut dcol, false);
                    g.col2im(&dcol, &mut gx[b * chw..(b + 1) * chw]);
                }
            }
            let mut grads = vec![gx, gw];
            if parents.len() == 3 {
                grads.push(parents[2].tracks_grad().then(|| {
                    (0..cout)
                        .map(|co| (0..n).map(|b| grad[(b * cout + co) * hw..(b * cout + co + 1) * hw].iter().sum::<f64>()).sum())
                        .collect()
                }));
            }
            grads
        }),
    )?)
}

/// Convolution layer with square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, rng: &mut impl Rng) -> Result<Self> {
        let weight = Tensor::param(
            trunc_normal(rng, cout * cin * kernel * kernel, INIT_STD),
            &[cout, cin, kernel, kernel],
        )?;
        let bias = Some(Tensor::param(vec![0.0; cout], &[cout])?);
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)
    }
}

impl Module for Conv2d {
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
