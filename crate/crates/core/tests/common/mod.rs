#![allow(dead_code)]

use dvit_core::data::image::{normalize, NormalizationSpec};
use dvit_core::data::synthetic::{class_names, texture_images};
use dvit_core::model::ModelConfig;
use dvit_core::train::InMemoryDataset;

/// Parameter count of a model config, from layer arithmetic alone.
pub fn expected_params(cfg: &ModelConfig) -> usize {
    let lin = |i: usize, o: usize| i * o + o;
    let conv = |ci: usize, co: usize| ci * co * 9 + co;
    let ln = |d: usize| 2 * d;
    let ch = &cfg.stage_channels;
    let half = ch[0] / 2;
    let mut n = conv(cfg.in_channels, half) + 2 * half + conv(half, ch[0]) + 2 * ch[0];
    for s in 0..4 {
        let c = ch[s];
        if s > 0 {
            n += conv(ch[s - 1], c) + ln(c);
        }
        let groups = (c / cfg.dcn_group_channels).max(1);
        let hidden = (c as f64 * cfg.dcn_mlp_ratio).round() as usize;
        let scales = if cfg.layer_scale_init.is_some() { 2 * c } else { 0 };
        let block = ln(c)
            + lin(c, c)
            + lin(c, groups * cfg.dcn_kernel_points * 3)
            + lin(c, c)
            + ln(c)
            + lin(c, hidden)
            + lin(hidden, c)
            + scales;
        n += cfg.stage_depths[s] * block;
    }
    let d = cfg.embed_dim;
    let inner = cfg.heads * cfg.head_dim;
    n += lin(ch[3], d) + d + cfg.tokens() * d;
    let enc = ln(d) + 3 * lin(d, inner) + lin(inner, d) + ln(d) + lin(d, cfg.mlp_dim) + lin(cfg.mlp_dim, d);
    n += cfg.encoder_depth * enc;
    n + ln(d) + lin(d, cfg.num_classes)
}

/// The 64-image, 8-class texture set at the tiny input size.
pub fn texture_dataset(per_class: usize, size: usize, seed: u64) -> InMemoryDataset {
    let spec = NormalizationSpec::with_size(size);
    let imgs = texture_images(8, per_class, size, 0.05, seed);
    InMemoryDataset {
        images: imgs.iter().map(|(i, _)| normalize(i, &spec).unwrap()).collect(),
        labels: imgs.iter().map(|(_, l)| *l).collect(),
        classes: class_names(8),
    }
}

/// Per-sample counting oracle for the six headline metrics:
/// (OA, mAcc, kappa, macro P, macro R, macro F1), with zero policy.
pub fn brute_force_metrics(truth: &[usize], pred: &[usize], c: usize) -> [f64; 6] {
    let n = truth.len() as f64;
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64;
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    let mut chance = 0.0;
    for k in 0..c {
        let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == k && p == k).count() as f64;
        let actual = truth.iter().filter(|&&t| t == k).count() as f64;
        let predicted = pred.iter().filter(|&&p| p == k).count() as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        p_sum += p;
        r_sum += r;
        f_sum += f;
        chance += actual * predicted / (n * n);
    }
    let po = correct / n;
    let kappa = (po - chance) / (1.0 - chance);
    let cf = c as f64;
    [po, r_sum / cf, kappa, p_sum / cf, r_sum / cf, f_sum / cf]
}

/// Straightforward Canny: blur, Sobel, 4-way NMS, recursive hysteresis.
pub fn reference_canny(gray: &[f64], h: usize, w: usize, low: f64, high: f64) -> Vec<u8> {
    let px = |img: &[f64], y: i64, x: i64| img[(y.clamp(0, h as i64 - 1) as usize) * w + x.clamp(0, w as i64 - 1) as usize];
    let sigma: f64 = 1.4;
    let mut k = [[0.0f64; 5]; 5];
    let mut total = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let (a, b) = (i as f64 - 2.0, j as f64 - 2.0);
            k[i][j] = (-(a * a + b * b) / (2.0 * sigma * sigma)).exp();
            total += k[i][j];
        }
    }
    let mut blur = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut s = 0.0;
            for i in 0..5i64 {
                for j in 0..5i64 {
                    s += k[i as usize][j as usize] / total * px(gray, y + i - 2, x + j - 2);
                }
            }
            blur[y as usize * w + x as usize] = s;
        }
    }
    let mut mag = vec![0.0; h * w];
    let mut ang = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let b = |dy: i64, dx: i64| px(&blur, y + dy, x + dx);
            let gx = (b(-1, 1) + 2.0 * b(0, 1) + b(1, 1)) - (b(-1, -1) + 2.0 * b(0, -1) + b(1, -1));
            let gy = (b(1, -1) + 2.0 * b(1, 0) + b(1, 1)) - (b(-1, -1) + 2.0 * b(-1, 0) + b(-1, 1));
            let i = y as usize * w + x as usize;
            mag[i] = (gx * gx + gy * gy).sqrt();
            let mut a = gy.atan2(gx).to_degrees();
            if a < 0.0 {
                a += 180.0;
            }
            ang[i] = a;
        }
    }
    let m = |y: i64, x: i64| if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 { 0.0 } else { mag[y as usize * w + x as usize] };
    let mut state = vec![0u8; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let a = ang[i];
            let (dy, dx) = if a < 22.5 || a >= 157.5 {
                (0, 1)
            } else if a < 67.5 {
                (1, 1)
            } else if a < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let v = mag[i];
            if v > 0.0 && v >= low && v > m(y - dy, x - dx) && v >= m(y + dy, x + dx) {
                state[i] = if v >= high { 2 } else { 1 };
            }
        }
    }
    let mut out = vec![0u8; h * w];
    fn grow(i: usize, h: usize, w: usize, state: &[u8], out: &mut [u8]) {
        let (y, x) = ((i / w) as i64, (i % w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny >= 0 && nx >= 0 && ny < h as i64 && nx < w as i64 {
                    let j = ny as usize * w + nx as usize;
                    if out[j] == 0 && state[j] >= 1 {
                        out[j] = 1;
                        grow(j, h, w, state, out);
                    }
                }
            }
        }
    }
    for i in 0..h * w {
        if state[i] == 2 && out[i] == 0 {
            out[i] = 1;
            grow(i, h, w, &state, &mut out);
        }
    }
    out
}

/// Writes an RGB PNG of a solid colour with a centred square.
pub fn write_square_png(path: &std::path::Path, size: usize, fg: [f64; 3], bg: [f64; 3]) {
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let inside = (size / 4..3 * size / 4).contains(&y) && (size / 4..3 * size / 4).contains(&x);
            data.extend_from_slice(if inside { &fg } else { &bg });
        }
    }
    dvit_core::data::image::Image { height: size, width: size, channels: 3, data }.save_png(path).unwrap();
}
