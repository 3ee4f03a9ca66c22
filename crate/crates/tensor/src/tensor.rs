use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Result, TensorError};
use crate::shape::{numel, validate};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Unique identity of a tensor node in the autograd graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

impl TensorId {
    fn fresh() -> Self {
        TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Local backward rule of a recorded op.
///
/// Receives the gradient of the op output, the parent tensors and the output
/// values; returns one gradient per parent (`None` where the parent does not
/// track gradients).
pub type BackwardFn =
    Box<dyn Fn(&[f64], &[Tensor], &[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

pub(crate) struct Recorded {
    pub(crate) name: &'static str,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) backward: BackwardFn,
}

pub(crate) struct Inner {
    pub(crate) id: TensorId,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Mutex<Option<Vec<f64>>>,
    pub(crate) op: Option<Recorded>,
}

impl Drop for Inner {
    // Unlinks long parent chains iteratively so deep graphs do not overflow
    // the stack on drop.
    fn drop(&mut self) {
        let Some(op) = self.op.take() else { return };
        let mut stack = op.parents;
        drop(op.backward);
        while let Some(t) = stack.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(t.0) {
                if let Some(op) = inner.op.take() {
                    stack.extend(op.parents);
                }
            }
        }
    }
}

/// Dense row-major n-dimensional array of `f64` with optional gradient.
///
/// Cloning is cheap (shared handle). Values are immutable after
/// construction; only the gradient slot of a leaf changes during backward.
#[derive(Clone)]
pub struct Tensor(pub(crate) Arc<Inner>);

/// Guard returned by [`no_grad`]; restores the previous mode on drop.
pub struct NoGradGuard {
    prev: bool,
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

/// Disables graph recording on the current thread until the guard drops.
pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

impl Tensor {
    fn build(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Option<Recorded>) -> Self {
        Tensor(Arc::new(Inner {
            id: TensorId::fresh(),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            op,
        }))
    }

    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        validate(shape)?;
        let expected = numel(shape);
        if data.len() != expected {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
                expected,
            });
        }
        Ok(Self::build(data, shape.to_vec(), false, None))
    }

    /// A leaf that requires grad (a trainable parameter or a checked input).
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let t = Self::new(data, shape)?;
        Ok(t.requires_grad(true))
    }

    pub fn scalar(v: f64) -> Self {
        Self::build(vec![v], vec![], false, None)
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::build(values.to_vec(), vec![values.len().max(1)], false, None)
    }

    pub fn full(shape: &[usize], v: f64) -> Result<Self> {
        Self::new(vec![v; numel(shape)], shape)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn zeros_like(&self) -> Self {
        Self::build(vec![0.0; self.numel()], self.shape().to_vec(), false, None)
    }

    pub fn ones_like(&self) -> Self {
        Self::build(vec![1.0; self.numel()], self.shape().to_vec(), false, None)
    }

    /// Returns a fresh leaf with the same values and the given grad flag.
    pub fn requires_grad(self, flag: bool) -> Self {
        match Arc::try_unwrap(self.0) {
            Ok(mut inner) if inner.op.is_none() => {
                let data = std::mem::take(&mut inner.data);
                let shape = std::mem::take(&mut inner.shape);
                Self::build(data, shape, flag, None)
            }
            Ok(inner) => Self::build(inner.data.clone(), inner.shape.clone(), flag, None),
            Err(arc) => Self::build(arc.data.clone(), arc.shape.clone(), flag, None),
        }
    }

    /// A leaf copy cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    /// Records a custom differentiable op.
    ///
    /// When recording is disabled or no parent tracks gradients the backward
    /// rule is discarded and a plain value is returned.
    pub fn from_op(
        data: Vec<f64>,
        shape: &[usize],
        name: &'static str,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Self> {
        validate(shape)?;
        let expected = numel(shape);
        if data.len() != expected {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
                expected,
            });
        }
        let record = is_grad_enabled() && parents.iter().any(Tensor::tracks_grad);
        let op = record.then(|| Recorded {
            name,
            parents,
            backward,
        });
        Ok(Self::build(data, shape.to_vec(), false, op))
    }

    pub fn id(&self) -> TensorId {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.0.data[0]
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn is_requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// True when gradients flow into or through this tensor.
    pub fn tracks_grad(&self) -> bool {
        self.0.requires_grad || self.0.op.is_some()
    }

    /// Name of the op that produced this tensor, if it was recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.op.as_ref().map(|o| o.name)
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn recorded(&self) -> Option<&Recorded> {
        self.0.op.as_ref()
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.0.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("data", &preview)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.op_name())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(vec![1.0, 2.0], &[3]).is_err());
        assert!(Tensor::new(vec![], &[0]).is_err());
        let t = Tensor::new(vec![1.0; 6], &[2, 3]).unwrap();
        assert_eq!(t.numel(), 6);
        assert_eq!(t.rank(), 2);
    }

    #[test]
    fn no_grad_skips_recording() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let y = {
            let _g = no_grad();
            x.mul_scalar(2.0)
        };
        assert!(!y.tracks_grad());
        assert!(x.mul_scalar(2.0).tracks_grad());
    }

    #[test]
    fn deep_chain_drops_without_overflow() {
        let x = Tensor::param(vec![1.0], &[1]).unwrap();
        let mut y = x.clone();
        for _ in 0..200_000 {
            y = y.add_scalar(1.0);
        }
        drop(y);
    }
}
