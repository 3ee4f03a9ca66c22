use crate::error::Result;
use crate::tensor::Tensor;

use super::reduce::axis_extents;

impl Tensor {
    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_extents(self.shape(), axis)?;
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| x[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in 0..len {
                    let e = (x[at(a)] - max).exp();
                    out[at(a)] = e;
                    z += e;
                }
                for a in 0..len {
                    out[at(a)] /= z;
                }
            }
        }
        Tensor::from_op(
            out,
            self.shape(),
            "softmax",
            vec![self.clone()],
            Box::new(move |g, _, y| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * len + a) * inner + i;
                        let dot: f64 = (0..len).map(|a| g[at(a)] * y[at(a)]).sum();
                        for a in 0..len {
                            gx[at(a)] = y[at(a)] * (g[at(a)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Log-softmax along `axis` via log-sum-exp.
    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_extents(self.shape(), axis)?;
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| x[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + (0..len).map(|a| (x[at(a)] - max).exp()).sum::<f64>().ln();
                for a in 0..len {
                    out[at(a)] = x[at(a)] - lse;
                }
            }
        }
        Tensor::from_op(
            out,
            self.shape(),
            "log_softmax",
            vec![self.clone()],
            Box::new(move |g, _, y| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * len + a) * inner + i;
                        let gsum: f64 = (0..len).map(|a| g[at(a)]).sum();
                        for a in 0..len {
                            gx[at(a)] = g[at(a)] - y[at(a)].exp() * gsum;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_pair() {
        let s = Tensor::from_slice(&[0.0, 0.0]).softmax(0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn large_logits_stay_finite() {
        let s = Tensor::from_slice(&[1000.0, 0.0]).softmax(0).unwrap();
        assert!(s.all_finite());
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] < 1e-300);
    }

    #[test]
    fn middle_axis() {
        let x = Tensor::new((0..12).map(|v| (v as f64).sin()).collect(), &[2, 3, 2]).unwrap();
        let s = x.softmax(1).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let sum: f64 = (0..3).map(|a| s.data()[(o * 3 + a) * 2 + i]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }
}
