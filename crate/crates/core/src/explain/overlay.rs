//! Heatmap colorization and blending.

use super::gradcam::Heatmap;
use crate::data::image::Image;
use crate::error::{CoreError, Result};

/// Colormap stops: blue, cyan, green, yellow, red at 0, ¼, ½, ¾, 1.
pub const STOPS: [[f64; 3]; 5] = [
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
];

pub const ALPHA: f64 = 0.5;

/// Piecewise-linear colour for `v`, clamped to [0, 1].
pub fn colormap(v: f64) -> [f64; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let pos = v * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let t = pos - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// `(1 − α)·image + α·colormap(heat)` per pixel.
pub fn render_overlay(image: &Image, heatmap: &Heatmap) -> Result<Image> {
    if image.channels != 3 || image.height != heatmap.height || image.width != heatmap.width {
        return Err(CoreError::Config(format!(
            "overlay needs an RGB image the size of the heatmap: image {}×{}×{}, heatmap {}×{}",
            image.height, image.width, image.channels, heatmap.height, heatmap.width
        )));
    }
    let mut data = Vec::with_capacity(image.data.len());
    for (px, &h) in image.data.chunks_exact(3).zip(&heatmap.data) {
        let c = colormap(h);
        for k in 0..3 {
            data.push((1.0 - ALPHA) * px[k] + ALPHA * c[k]);
        }
    }
    Ok(Image { height: image.height, width: image.width, channels: 3, data })
}
