//! Canny edge detection on 8-bit-scale grayscale images.

use crate::error::{CoreError, Result};

pub const DEFAULT_LOW: f64 = 100.0;
pub const DEFAULT_HIGH: f64 = 150.0;
pub const SIGMA: f64 = 1.4;

/// Binary edge mask, row-major, values in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub height: usize,
    pub width: usize,
    pub mask: Vec<u8>,
    pub low: f64,
    pub high: f64,
}

impl EdgeMap {
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().map(|&v| v as usize).sum()
    }

    /// White edges on black, as a single-channel image in [0, 1].
    pub fn to_image(&self) -> super::image::Image {
        super::image::Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.mask.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Normalized 5×5 Gaussian kernel with the fixed sigma.
pub fn gaussian_kernel() -> [[f64; 5]; 5] {
    let mut k = [[0.0; 5]; 5];
    let mut sum = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 2.0, j as f64 - 2.0);
            *v = (-(dy * dy + dx * dx) / (2.0 * SIGMA * SIGMA)).exp();
            sum += *v;
        }
    }
    for row in &mut k {
        for v in row {
            *v /= sum;
        }
    }
    k
}

fn clamp_at(img: &[f64], h: usize, w: usize, y: isize, x: isize) -> f64 {
    let y = y.clamp(0, h as isize - 1) as usize;
    let x = x.clamp(0, w as isize - 1) as usize;
    img[y * w + x]
}

fn convolve<const K: usize>(img: &[f64], h: usize, w: usize, k: &[[f64; K]; K]) -> Vec<f64> {
    let r = (K / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, row) in k.iter().enumerate() {
                for (j, &kv) in row.iter().enumerate() {
                    acc += kv * clamp_at(img, h, w, y as isize + i as isize - r, x as isize + j as isize - r);
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Neighbour step `(dy, dx)` along the quantized gradient direction.
fn direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut a = gy.atan2(gx).to_degrees();
    if a < 0.0 {
        a += 180.0;
    }
    if !(22.5..157.5).contains(&a) {
        (0, 1)
    } else if a < 67.5 {
        (1, 1)
    } else if a < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

/// Edge mask of a row-major grayscale image on a 0..255 scale.
///
/// Borders are replicated for blurring and gradients. In non-maximum
/// suppression a pixel must strictly exceed its neighbour behind the
/// gradient and match or exceed the one ahead, so plateaus two pixels wide
/// thin to one. Out-of-image neighbours count as zero. Hysteresis keeps
/// weak pixels 8-connected to a strong one.
pub fn canny_edges(gray: &[f64], height: usize, width: usize, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(CoreError::Thresholds { low, high });
    }
    if gray.len() != height * width {
        return Err(CoreError::Config(format!("{} pixels do not fill {height}×{width}", gray.len())));
    }
    let (h, w) = (height, width);
    let blurred = convolve(gray, h, w, &gaussian_kernel());
    let gx = convolve(&blurred, h, w, &SOBEL_X);
    let gy = convolve(&blurred, h, w, &SOBEL_Y);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let at = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // 2 strong, 1 weak, 0 none
    let mut class = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 || m < low {
                continue;
            }
            let (dy, dx) = direction(gx[i], gy[i]);
            let (yi, xi) = (y as isize, x as isize);
            if m > at(yi - dy, xi - dx) && m >= at(yi + dy, xi + dx) {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }
    let mut mask = vec![0u8; h * w];
    let mut stack: Vec<usize> = (0..h * w).filter(|&i| class[i] == 2).collect();
    for &i in &stack {
        mask[i] = 1;
    }
    while let Some(i) = stack.pop() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask[j] == 0 && class[j] == 1 {
                    mask[j] = 1;
                    stack.push(j);
                }
            }
        }
    }
    Ok(EdgeMap { height, width, mask, low, high })
}
