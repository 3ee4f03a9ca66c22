//! Synthetic texture images for smoke tests and demos.
//!
//! Class `k` gets a fixed colour and a sinusoidal stripe pattern whose
//! orientation and frequency depend on `k`. Images of one class differ only
//! by small uniform pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::Image;

/// Texture of class `k` at pixel `(y, x)`, before noise.
pub fn texture(k: usize, y: usize, x: usize, size: usize) -> [f64; 3] {
    let hue = k as f64 / 8.0 * std::f64::consts::TAU;
    let base = [0.5 + 0.3 * hue.cos(), 0.5 + 0.3 * (hue + 2.1).cos(), 0.5 + 0.3 * (hue + 4.2).cos()];
    let angle = (k % 4) as f64 * std::f64::consts::FRAC_PI_4;
    let freq = if k < 4 { 2.0 } else { 4.0 };
    let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
    let s = (std::f64::consts::TAU * freq * (u * angle.cos() + v * angle.sin())).sin();
    base.map(|b| (b + 0.15 * s).clamp(0.0, 1.0))
}

/// `per_class` noisy images of each of `classes` textures, class-major.
pub fn texture_images(classes: usize, per_class: usize, size: usize, noise: f64, seed: u64) -> Vec<(Image, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes * per_class);
    for k in 0..classes {
        for _ in 0..per_class {
            let mut data = Vec::with_capacity(size * size * 3);
            for y in 0..size {
                for x in 0..size {
                    for c in texture(k, y, x, size) {
                        data.push((c + rng.random_range(-noise..=noise)).clamp(0.0, 1.0));
                    }
                }
            }
            out.push((Image { height: size, width: size, channels: 3, data }, k));
        }
    }
    out
}

pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|k| format!("texture{k}")).collect()
}
