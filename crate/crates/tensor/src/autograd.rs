//! Reverse-mode differentiation over the recorded op graph.

use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::tensor::{Tensor, TensorId};

/// Ordered list of recorded ops reachable from a root, parents before
/// children. Backward walks it in reverse.
pub struct Tape {
    nodes: Vec<Tensor>,
}

/// Gradients of every grad-tracking tensor reached by one backward pass,
/// intermediates included.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<TensorId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads.get(&t.id()).map(Vec::as_slice)
    }

    pub fn get_tensor(&self, t: &Tensor) -> Option<Tensor> {
        self.get(t)
            .map(|g| Tensor::new(g.to_vec(), t.shape()).expect("grad matches tensor shape"))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    /// Topologically sorts the grad-tracking subgraph under `root`.
    pub fn record(root: &Tensor) -> Tape {
        let mut nodes = Vec::new();
        if !root.tracks_grad() {
            return Tape { nodes };
        }
        let mut visited: HashSet<TensorId> = HashSet::new();
        // (node, next parent index to visit)
        let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
        visited.insert(root.id());
        while let Some((node, next)) = stack.pop() {
            let parents = node.recorded().map(|r| r.parents.as_slice()).unwrap_or(&[]);
            let mut pushed = false;
            for (i, p) in parents.iter().enumerate().skip(next) {
                if p.tracks_grad() && visited.insert(p.id()) {
                    let p = p.clone();
                    stack.push((node.clone(), i + 1));
                    stack.push((p, 0));
                    pushed = true;
                    break;
                }
            }
            if !pushed {
                nodes.push(node);
            }
        }
        Tape { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Op names in recording order (leaves report `"leaf"`).
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op_name().unwrap_or("leaf")).collect()
    }

    /// Propagates `seed` (gradient of the root) back through the tape and
    /// accumulates into the grad slot of every leaf that requires grad.
    pub fn backward(&self, seed: Vec<f64>) -> Gradients {
        let mut grads: HashMap<TensorId, Vec<f64>> = HashMap::new();
        let Some(root) = self.nodes.last() else {
            return Gradients { grads };
        };
        grads.insert(root.id(), seed);
        for node in self.nodes.iter().rev() {
            let Some(rec) = node.recorded() else { continue };
            let Some(g) = grads.get(&node.id()) else { continue };
            let parent_grads = (rec.backward)(g, &rec.parents, node.data());
            debug_assert_eq!(parent_grads.len(), rec.parents.len(), "op {}", rec.name);
            for (p, pg) in rec.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !p.tracks_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), p.numel(), "op {} parent grad length", rec.name);
                match grads.get_mut(&p.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    None => {
                        grads.insert(p.id(), pg);
                    }
                }
            }
        }
        for node in &self.nodes {
            if node.is_leaf() && node.is_requires_grad() {
                if let Some(g) = grads.get(&node.id()) {
                    node.accumulate_grad(g);
                }
            }
        }
        Gradients { grads }
    }
}

impl Tensor {
    /// Backpropagates from a scalar loss.
    pub fn backward(&self) -> Result<Gradients> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        Ok(Tape::record(self).backward(vec![1.0]))
    }
}

/// Free-function form of [`Tensor::backward`].
pub fn backward(loss: &Tensor) -> Result<Gradients> {
    loss.backward()
}
