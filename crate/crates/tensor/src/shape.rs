//! Shape arithmetic and trailing-dimension broadcasting.

use crate::error::{Result, TensorError};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn validate(shape: &[usize]) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

/// Result shape of broadcasting `a` against `b`.
///
/// Dimensions are aligned from the trailing end; a dimension broadcasts when
/// it is 1 or absent.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::Broadcast {
                    a: a.to_vec(),
                    b: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// Maps flat indices of a broadcast output back to flat indices of one input.
#[derive(Debug, Clone)]
pub(crate) enum BroadcastMap {
    Identity,
    /// Input equals the trailing block of the output: `i % len`.
    Suffix(usize),
    Table(Vec<usize>),
}

impl BroadcastMap {
    pub(crate) fn new(out: &[usize], input: &[usize]) -> Self {
        let n_in = numel(input);
        if out == input {
            return BroadcastMap::Identity;
        }
        let trimmed: Vec<usize> = {
            let first = input.iter().position(|&d| d != 1).unwrap_or(input.len());
            input[first..].to_vec()
        };
        if trimmed.len() <= out.len() && out[out.len() - trimmed.len()..] == trimmed[..] {
            return BroadcastMap::Suffix(n_in);
        }
        let rank = out.len();
        let offset = rank - input.len();
        let in_strides = strides(input);
        let mut eff = vec![0usize; rank];
        for i in 0..input.len() {
            if input[i] != 1 {
                eff[offset + i] = in_strides[i];
            }
        }
        let total = numel(out);
        let mut table = Vec::with_capacity(total);
        let mut idx = vec![0usize; rank];
        let mut flat = 0usize;
        for _ in 0..total {
            table.push(flat);
            for d in (0..rank).rev() {
                idx[d] += 1;
                flat += eff[d];
                if idx[d] < out[d] {
                    break;
                }
                flat -= eff[d] * idx[d];
                idx[d] = 0;
            }
        }
        BroadcastMap::Table(table)
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> usize {
        match self {
            BroadcastMap::Identity => i,
            BroadcastMap::Suffix(len) => i % len,
            BroadcastMap::Table(t) => t[i],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shapes(&[2, 3], &[3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shapes(&[4, 1, 3], &[2, 1]).unwrap(), vec![4, 2, 3]);
        assert_eq!(broadcast_shapes(&[], &[2, 2]).unwrap(), vec![2, 2]);
        assert!(broadcast_shapes(&[2, 3], &[2]).is_err());
    }

    #[test]
    fn table_matches_suffix() {
        let m = BroadcastMap::new(&[2, 3], &[1, 3]);
        for i in 0..6 {
            assert_eq!(m.get(i), i % 3);
        }
        let t = BroadcastMap::new(&[2, 3], &[2, 1]);
        let got: Vec<usize> = (0..6).map(|i| t.get(i)).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 1, 1]);
    }
}
