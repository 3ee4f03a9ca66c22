//! Dropout and DropPath (stochastic depth).

use dvit_tensor::Tensor;
use rand::Rng;

use crate::error::{NnError, Result};
use crate::module::Ctx;

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(NnError::InvalidRate(rate))
    }
}

fn masked(x: &Tensor, mask: Vec<f64>, mask_shape: &[usize]) -> Result<Tensor> {
    let mask = Tensor::new(mask, mask_shape)?;
    Ok(x.mul(&mask)?)
}

/// Zeroes each element with probability `rate`, scaling survivors by
/// `1/(1−rate)`. Returns `x` unchanged in eval mode or at rate 0.
pub fn dropout(x: &Tensor, rate: f64, ctx: &mut Ctx) -> Result<Tensor> {
    check_rate(rate)?;
    if !ctx.training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - rate;
    let rng = ctx.rng();
    let mask = (0..x.numel())
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    masked(x, mask, x.shape())
}

/// Drops whole samples (leading axis) with probability `rate`.
pub fn drop_path(x: &Tensor, rate: f64, ctx: &mut Ctx) -> Result<Tensor> {
    check_rate(rate)?;
    if !ctx.training || rate == 0.0 {
        return Ok(x.clone());
    }
    if x.rank() == 0 {
        return Err(NnError::shape("drop_path", "scalar input has no sample axis"));
    }
    let keep = 1.0 - rate;
    let n = x.shape()[0];
    let rng = ctx.rng();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mut shape = vec![1; x.rank()];
    shape[0] = n;
    masked(x, mask, &shape)
}
