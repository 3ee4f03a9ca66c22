use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Normal(0, std) samples truncated to ±2 std by resampling.
pub fn trunc_normal(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("std must be finite and positive");
    (0..n)
        .map(|_| loop {
            let v: f64 = dist.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect()
}

pub const INIT_STD: f64 = 0.02;
