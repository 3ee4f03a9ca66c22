//! Kernel Inception Distance over caller-supplied feature vectors.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KidConfig {
    pub subsets: usize,
    /// Defaults to min(1000, n, m), halved per set when `disjoint`.
    pub subset_size: Option<usize>,
    pub degree: i32,
    pub seed: u64,
    /// Draw both subsets from one permutation so they share no index.
    /// Meant for comparing a set against itself.
    pub disjoint: bool,
}

impl Default for KidConfig {
    fn default() -> Self {
        KidConfig { subsets: 100, subset_size: None, degree: 3, seed: 0, disjoint: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KidEstimate {
    /// Mean unbiased MMD² over subsets.
    pub value: f64,
    /// `value` × 1000, the usual reporting unit.
    pub value_x1000: f64,
    /// Standard deviation across subsets.
    pub std: f64,
    pub subsets: usize,
    pub subset_size: usize,
    pub degree: i32,
    pub dim: usize,
}

/// Polynomial kernel `(xᵀy / d + 1)^degree`.
pub fn poly_kernel(x: &[f64], y: &[f64], degree: i32) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / x.len() as f64 + 1.0).powi(degree)
}

/// Unbiased MMD² between two equal-size samples.
pub fn mmd2_unbiased(x: &[&[f64]], y: &[&[f64]], degree: i32) -> f64 {
    let m = x.len();
    assert!(m >= 2 && y.len() == m, "mmd2_unbiased needs two samples of equal size >= 2");
    let within = |s: &[&[f64]]| {
        let mut acc = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                acc += poly_kernel(s[i], s[j], degree);
            }
        }
        2.0 * acc / (m * (m - 1)) as f64
    };
    let mut cross = 0.0;
    for a in x {
        for b in y {
            cross += poly_kernel(a, b, degree);
        }
    }
    within(x) + within(y) - 2.0 * cross / (m * m) as f64
}

fn check_dims(set: &[Vec<f64>], dim: usize, which: &str) -> Result<()> {
    if let Some(v) = set.iter().find(|v| v.len() != dim) {
        return Err(CoreError::Metric(format!("{which} feature of length {} where {dim} expected", v.len())));
    }
    if set.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CoreError::Metric(format!("{which} features contain non-finite values")));
    }
    Ok(())
}

pub fn kid(real: &[Vec<f64>], generated: &[Vec<f64>], cfg: &KidConfig) -> Result<KidEstimate> {
    let (n, m) = (real.len(), generated.len());
    let dim = real.first().or(generated.first()).map_or(0, Vec::len);
    if dim == 0 {
        return Err(CoreError::Metric("kid needs non-empty feature vectors".into()));
    }
    check_dims(real, dim, "real")?;
    check_dims(generated, dim, "generated")?;
    if cfg.subsets == 0 {
        return Err(CoreError::Metric("kid needs at least one subset".into()));
    }
    let pool = n.min(m);
    let per_set_cap = if cfg.disjoint { pool / 2 } else { pool };
    let size = cfg.subset_size.unwrap_or(per_set_cap.min(1000));
    let need = if cfg.disjoint { 2 * size } else { size };
    if size < 2 || pool < need {
        return Err(CoreError::KidSamples { need: need.max(if cfg.disjoint { 4 } else { 2 }), subset: size, have: pool });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values = Vec::with_capacity(cfg.subsets);
    for _ in 0..cfg.subsets {
        let (xi, yi): (Vec<usize>, Vec<usize>) = if cfg.disjoint {
            let idx = sample(&mut rng, pool, 2 * size).into_vec();
            (idx[..size].to_vec(), idx[size..].to_vec())
        } else {
            (sample(&mut rng, n, size).into_vec(), sample(&mut rng, m, size).into_vec())
        };
        let xs: Vec<&[f64]> = xi.iter().map(|&i| real[i].as_slice()).collect();
        let ys: Vec<&[f64]> = yi.iter().map(|&i| generated[i].as_slice()).collect();
        values.push(mmd2_unbiased(&xs, &ys, cfg.degree));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(KidEstimate {
        value: mean,
        value_x1000: mean * 1000.0,
        std: var.sqrt(),
        subsets: cfg.subsets,
        subset_size: size,
        degree: cfg.degree,
        dim,
    })
}
