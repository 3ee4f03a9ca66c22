//! Central finite-difference gradient checking.

use crate::error::{Result, TensorError};
use crate::tensor::{no_grad, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Max over elements of `|analytic − numeric| / max(1, |numeric|)` for a
/// scalar-valued `f` at `x`.
///
/// Non-finite function values or gradients are reported as
/// [`TensorError::NonFinite`] instead of a number, so a check at a pole or
/// discontinuity cannot silently pass.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    grad_check_many(|xs: &[Tensor]| f(&xs[0]), std::slice::from_ref(x), eps)
}

/// [`grad_check`] over several inputs at once; the error is the max across
/// all elements of all inputs.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    if !(eps > 0.0) {
        return Err(TensorError::shape("grad_check", format!("eps must be positive, got {eps}")));
    }
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| t.detach().requires_grad(true))
        .collect();
    let y = f(&leaves)?;
    if y.numel() != 1 {
        return Err(TensorError::NonScalarLoss(y.shape().to_vec()));
    }
    if !y.item().is_finite() {
        return Err(TensorError::NonFinite("grad_check output".into()));
    }
    let grads = y.backward()?;
    let _guard = no_grad();
    let eval = |which: usize, j: usize, delta: f64| -> Result<f64> {
        let mut xs: Vec<Tensor> = leaves.iter().map(Tensor::detach).collect();
        let mut d = xs[which].to_vec();
        d[j] += delta;
        xs[which] = Tensor::new(d, leaves[which].shape())?;
        let v = f(&xs)?.item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite(format!("grad_check perturbation of input {which}[{j}]")))
        }
    };
    let mut worst: f64 = 0.0;
    for (which, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(leaf);
        for j in 0..leaf.numel() {
            let numeric = (eval(which, j, eps)? - eval(which, j, -eps)?) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g[j]);
            if !a.is_finite() {
                return Err(TensorError::NonFinite(format!("analytic gradient of input {which}[{j}]")));
            }
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
