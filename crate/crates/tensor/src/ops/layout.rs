use crate::error::{Result, TensorError};
use crate::shape::{numel, strides, BroadcastMap};
use crate::tensor::Tensor;

use super::reduce::axis_extents;

impl Tensor {
    /// Same values under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(TensorError::shape(
                "reshape",
                format!("cannot reshape {:?} into {:?}", self.shape(), shape),
            ));
        }
        Tensor::from_op(
            self.to_vec(),
            shape,
            "reshape",
            vec![self.clone()],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        )
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::shape(
                "permute",
                format!("{perm:?} is not a permutation of rank {rank}"),
            ));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let src = permute_index(&in_shape, perm);
        let x = self.data();
        let data: Vec<f64> = src.iter().map(|&s| x[s]).collect();
        Tensor::from_op(
            data,
            &out_shape,
            "permute",
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; g.len()];
                for (o, &s) in src.iter().enumerate() {
                    gx[s] = g[o];
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor> {
        let mut perm: Vec<usize> = (0..self.rank()).collect();
        if a >= perm.len() || b >= perm.len() {
            return Err(TensorError::Axis {
                axis: a.max(b),
                rank: self.rank(),
            });
        }
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Expands size-1 (or missing leading) dimensions to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        let target = crate::shape::broadcast_shapes(self.shape(), shape)?;
        if target != shape {
            return Err(TensorError::Broadcast {
                a: self.shape().to_vec(),
                b: shape.to_vec(),
            });
        }
        let map = BroadcastMap::new(shape, self.shape());
        let x = self.data();
        let n = numel(shape);
        let data: Vec<f64> = (0..n).map(|i| x[map.get(i)]).collect();
        let n_in = self.numel();
        Tensor::from_op(
            data,
            shape,
            "broadcast_to",
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; n_in];
                for (i, &gi) in g.iter().enumerate() {
                    gx[map.get(i)] += gi;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Concatenates tensors along `axis`; other dimensions must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::shape("concat", "no tensors given"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(TensorError::Axis { axis, rank });
        }
        for p in parts {
            let ok = p.rank() == rank
                && (0..rank).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
            if !ok {
                return Err(TensorError::shape(
                    "concat",
                    format!("{:?} incompatible with {:?} on axis {axis}", p.shape(), first.shape()),
                ));
            }
        }
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_extents(&out_shape, axis)?;
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                let chunk = len * inner;
                data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor::from_op(
            data,
            &out_shape,
            "concat",
            parts.to_vec(),
            Box::new(move |g, parents, _| {
                let mut grads: Vec<Vec<f64>> =
                    parents.iter().map(|p| Vec::with_capacity(p.numel())).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (gp, &len) in grads.iter_mut().zip(&lens) {
                        let chunk = len * inner;
                        gp.extend_from_slice(&g[off..off + chunk]);
                        off += chunk;
                    }
                }
                grads
                    .into_iter()
                    .zip(parents)
                    .map(|(gp, p)| p.tracks_grad().then_some(gp))
                    .collect()
            }),
        )
    }

    /// Slice `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let (outer, full, inner) = axis_extents(self.shape(), axis)?;
        if len == 0 || start + len > full {
            return Err(TensorError::shape(
                "narrow",
                format!("range {start}..{} out of bounds for axis of size {full}", start + len),
            ));
        }
        let x = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Tensor::from_op(
            data,
            &shape,
            "narrow",
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; outer * full * inner];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    gx[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Picks one index along `axis`, dropping that axis.
    pub fn select(&self, axis: usize, index: usize) -> Result<Tensor> {
        let t = self.narrow(axis, index, 1)?;
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        t.reshape(&shape)
    }
}

/// For every output flat index of `permute(perm)`, the source flat index.
fn permute_index(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = in_shape.len();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let eff: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = numel(in_shape);
    let mut src = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut flat = 0usize;
    for _ in 0..total {
        src.push(flat);
        for d in (0..rank).rev() {
            idx[d] += 1;
            flat += eff[d];
            if idx[d] < out_shape[d] {
                break;
            }
            flat -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    src
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_2d() {
        let x = Tensor::new((0..6).map(f64::from).collect(), &[2, 3]).unwrap();
        let t = x.transpose(0, 1).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn permute_rejects_duplicates() {
        let x = Tensor::zeros(&[2, 3, 4]).unwrap();
        assert!(x.permute(&[0, 0, 1]).is_err());
        assert_eq!(x.permute(&[2, 0, 1]).unwrap().shape(), &[4, 2, 3]);
    }

    #[test]
    fn concat_and_narrow_invert() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::new(vec![5.0, 6.0], &[2, 1]).unwrap();
        let c = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.narrow(1, 0, 2).unwrap().data(), a.data());
        assert_eq!(c.narrow(1, 2, 1).unwrap().data(), b.data());
        assert!(c.narrow(1, 2, 2).is_err());
    }

    #[test]
    fn broadcast_to_leading() {
        let a = Tensor::new(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = a.broadcast_to(&[3, 2]).unwrap();
        assert_eq!(b.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(a.broadcast_to(&[3, 3]).is_err());
    }
}
