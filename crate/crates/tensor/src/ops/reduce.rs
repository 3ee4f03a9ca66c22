use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
pub(crate) fn axis_extents(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::Axis {
            axis,
            rank: shape.len(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl Tensor {
    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![s],
            &[],
            "sum",
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
        )
        .expect("scalar shape")
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let (outer, len, inner) = axis_extents(self.shape(), axis)?;
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x[base + i];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        Tensor::from_op(
            out,
            &shape,
            "sum_axis",
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        let base = (o * len + a) * inner;
                        gx[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let len = *self.shape().get(axis).ok_or(TensorError::Axis {
            axis,
            rank: self.rank(),
        })?;
        Ok(self.sum_axis(axis, keepdim)?.mul_scalar(1.0 / len as f64))
    }

    /// Index of the largest element along the last axis, per row.
    pub fn argmax_last(&self) -> Vec<usize> {
        let n = *self.shape().last().unwrap_or(&1);
        self.data()
            .chunks(n)
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_axis_values() {
        let x = Tensor::new((0..6).map(f64::from).collect(), &[2, 3]).unwrap();
        assert_eq!(x.sum_axis(0, false).unwrap().data(), &[3.0, 5.0, 7.0]);
        let r = x.sum_axis(1, true).unwrap();
        assert_eq!(r.shape(), &[2, 1]);
        assert_eq!(r.data(), &[3.0, 12.0]);
        assert!(x.sum_axis(2, false).is_err());
    }

    #[test]
    fn argmax_first_on_ties() {
        let x = Tensor::new(vec![1.0, 3.0, 3.0, 0.0, 0.0, 0.0], &[2, 3]).unwrap();
        assert_eq!(x.argmax_last(), vec![1, 0]);
    }
}
