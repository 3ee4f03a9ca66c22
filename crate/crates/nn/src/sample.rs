//! Bilinear sampling with zero padding.

use dvit_tensor::Tensor;

use crate::error::{NnError, Result};

/// One of the four integer neighbours of a fractional point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    /// Flat `y*W + x` index, `None` when the neighbour lies outside the map.
    pub index: Option<usize>,
    pub weight: f64,
    /// Derivatives of `weight` w.r.t. the point's y and x.
    pub dwy: f64,
    pub dwx: f64,
}

pub(crate) fn taps(y: f64, x: f64, h: usize, w: usize) -> [Tap; 4] {
    let (y0, x0) = (y.floor(), x.floor());
    let (ly, lx) = (y - y0, x - x0);
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    let at = |yy: f64, xx: f64| -> Option<usize> {
        (yy >= 0.0 && xx >= 0.0 && yy < h as f64 && xx < w as f64).then(|| yy as usize * w + xx as usize)
    };
    [
        Tap { index: at(y0, x0), weight: hy * hx, dwy: -hx, dwx: -hy },
        Tap { index: at(y0, x0 + 1.0), weight: hy * lx, dwy: -lx, dwx: hy },
        Tap { index: at(y0 + 1.0, x0), weight: ly * hx, dwy: hx, dwx: -ly },
        Tap { index: at(y0 + 1.0, x0 + 1.0), weight: ly * lx, dwy: lx, dwx: ly },
    ]
}

/// Samples a `C×H×W` map at `K` points given as a `K×2` tensor of `(y, x)`
/// pixel coordinates, returning `C×K`.
///
/// Neighbours outside the map read as zero, so points beyond
/// `(−1, H)×(−1, W)` sample zero. Differentiable in both inputs.
pub fn bilinear_sample(feature: &Tensor, points: &Tensor) -> Result<Tensor> {
    let fs = feature.shape();
    if fs.len() != 3 || points.rank() != 2 || points.shape()[1] != 2 {
        return Err(NnError::shape(
            "bilinear_sample",
            format!("expected C×H×W and K×2, got {fs:?} and {:?}", points.shape()),
        ));
    }
    let (c, h, w) = (fs[0], fs[1], fs[2]);
    let k = points.shape()[0];
    let (fd, pd) = (feature.data(), points.data());
    let tap_list: Vec<[Tap; 4]> = (0..k).map(|i| taps(pd[2 * i], pd[2 * i + 1], h, w)).collect();
    let mut out = vec![0.0; c * k];
    for ch in 0..c {
        let plane = &fd[ch * h * w..(ch + 1) * h * w];
        for (i, ts) in tap_list.iter().enumerate() {
            out[ch * k + i] = ts.iter().filter_map(|t| t.index.map(|j| t.weight * plane[j])).sum();
        }
    }
    Ok(Tensor::from_op(
        out,
        &[c, k],
        "bilinear_sample",
        vec![feature.clone(), points.clone()],
        Box::new(move |grad, parents, _| {
            let fd = parents[0].data();
            let mut gf = vec![0.0; c * h * w];
            let mut gp = vec![0.0; k * 2];
            for ch in 0..c {
                let plane = &fd[ch * h * w..(ch + 1) * h * w];
                let gplane = &mut gf[ch * h * w..(ch + 1) * h * w];
                for (i, ts) in tap_list.iter().enumerate() {
                    let g = grad[ch * k + i];
                    for t in ts {
                        if let Some(j) = t.index {
                            gplane[j] += g * t.weight;
                            gp[2 * i] += g * t.dwy * plane[j];
                            gp[2 * i + 1] += g * t.dwx * plane[j];
                        }
                    }
                }
            }
            vec![Some(gf), Some(gp)]
        }),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_outside_is_zero() {
        let f = Tensor::ones(&[1, 2, 2]).unwrap();
        let p = Tensor::new(vec![-1.0, 0.0, 0.0, 2.0, -3.5, 7.0], &[3, 2]).unwrap();
        let y = bilinear_sample(&f, &p).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_outside_fades() {
        let f = Tensor::ones(&[1, 2, 2]).unwrap();
        let p = Tensor::new(vec![-0.5, 0.0], &[1, 2]).unwrap();
        let y = bilinear_sample(&f, &p).unwrap();
        assert_eq!(y.data(), &[0.5]);
    }
}
