//! Image decoding, resizing and normalization.
//!
//! Two on-disk formats are read: 8-bit RGB PNG, and a raw sidecar made of
//! the ASCII header `RAWIMG <h> <w> <c>\n` followed by `h*w*c` little-endian
//! f32 samples in HWC order with values in [0, 1].

use std::io::Cursor;
use std::path::{Path, PathBuf};

use dvit_tensor::Tensor;
use image::{ColorType, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Per-channel normalization and target side length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSpec {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub size: usize,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        NormalizationSpec {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
            size: 512,
        }
    }
}

impl NormalizationSpec {
    pub fn with_size(size: usize) -> Self {
        NormalizationSpec { size, ..Self::default() }
    }
}

/// An HWC raster with samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels || height == 0 || width == 0 || channels == 0 {
            return Err(CoreError::Image {
                path: PathBuf::new(),
                detail: format!("{} samples do not fill {height}×{width}×{channels}", data.len()),
            });
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Image { height, width, channels: 3, data }
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Luma on a 0..255 scale (BT.601 weights), row-major.
    pub fn to_gray255(&self) -> Vec<f64> {
        (0..self.height * self.width)
            .map(|i| {
                let px = &self.data[i * self.channels..(i + 1) * self.channels];
                let v = if self.channels >= 3 {
                    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
                } else {
                    px[0]
                };
                v * 255.0
            })
            .collect()
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let rgb: Vec<u8> = match self.channels {
            3 => self.data.iter().map(|&v| to_u8(v)).collect(),
            1 => self.data.iter().flat_map(|&v| [to_u8(v); 3]).collect(),
            c => {
                return Err(CoreError::Image { path: PathBuf::new(), detail: format!("cannot encode {c} channels") });
            }
        };
        let img = RgbImage::from_raw(self.width as u32, self.height as u32, rgb)
            .ok_or_else(|| CoreError::Image { path: PathBuf::new(), detail: "buffer size mismatch".into() })?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| CoreError::Image { path: PathBuf::new(), detail: e.to_string() })?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_err(path: &str, detail: impl Into<String>) -> CoreError {
    CoreError::Image { path: PathBuf::from(path), detail: detail.into() }
}

/// Decodes an 8-bit RGB PNG.
pub fn decode_png(bytes: &[u8], label: &str) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| image_err(label, e.to_string()))?;
    if img.color() != ColorType::Rgb8 {
        return Err(image_err(label, format!("expected 8-bit RGB, got {:?}", img.color())));
    }
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(Image { height: h as usize, width: w as usize, channels: 3, data })
}

/// Parses the raw sidecar format.
pub fn decode_raw(bytes: &[u8], label: &str) -> Result<Image> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| image_err(label, "raw header has no newline"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| image_err(label, "raw header is not ASCII"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dims: Vec<usize> = match fields.as_slice() {
        ["RAWIMG", rest @ ..] if rest.len() == 3 => rest
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| image_err(label, format!("bad raw header {header:?}")))?,
        _ => return Err(image_err(label, format!("bad raw header {header:?}"))),
    };
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    let body = &bytes[nl + 1..];
    if h == 0 || w == 0 || c == 0 || body.len() != h * w * c * 4 {
        return Err(image_err(label, format!("raw body of {} bytes does not match {h}×{w}×{c}", body.len())));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(image_err(label, "raw samples must be finite"));
    }
    Ok(Image { height: h, width: w, channels: c, data })
}

pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = format!("RAWIMG {} {} {}\n", img.height, img.width, img.channels).into_bytes();
    for &v in &img.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes by content: raw sidecar if the header matches, PNG otherwise.
pub fn decode_image(bytes: &[u8], label: &str) -> Result<Image> {
    if bytes.starts_with(b"RAWIMG") {
        decode_raw(bytes, label)
    } else {
        decode_png(bytes, label)
    }
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    decode_image(&bytes, &path.display().to_string())
}

/// Bilinear resize with half-pixel centres and clamped borders.
///
/// Resizing to the same size returns the input unchanged.
pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Image {
    if height == img.height && width == img.width {
        return img.clone();
    }
    let coords = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ys = coords(height, img.height);
    let xs = coords(width, img.width);
    let c = img.channels;
    let mut data = Vec::with_capacity(height * width * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let top = img.at(y0, x0, ch) * (1.0 - fx) + img.at(y0, x1, ch) * fx;
                let bot = img.at(y1, x0, ch) * (1.0 - fx) + img.at(y1, x1, ch) * fx;
                data.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Image { height, width, channels: c, data }
}

/// Resizes to `spec.size` square and normalizes into a `3×S×S` tensor.
pub fn normalize(img: &Image, spec: &NormalizationSpec) -> Result<Tensor> {
    if img.channels != 3 {
        return Err(image_err("", format!("expected 3 channels, got {}", img.channels)));
    }
    if spec.std.iter().any(|&s| !(s > 0.0)) {
        return Err(CoreError::Config(format!("normalization std must be positive, got {:?}", spec.std)));
    }
    let s = spec.size;
    let r = resize_bilinear(img, s, s);
    let mut data = vec![0.0; 3 * s * s];
    for (i, px) in r.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * s * s + i] = (px[c] - spec.mean[c]) / spec.std[c];
        }
    }
    Ok(Tensor::new(data, &[3, s, s])?)
}

pub fn decode_and_normalize(bytes: &[u8], label: &str, spec: &NormalizationSpec) -> Result<Tensor> {
    let img = decode_image(bytes, label)?;
    if img.channels != 3 {
        return Err(image_err(label, format!("expected RGB, got {} channels", img.channels)));
    }
    normalize(&img, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_roundtrip() {
        let img = Image::new(2, 3, 3, (0..18).map(|i| i as f64 / 32.0).collect()).unwrap();
        assert_eq!(decode_image(&encode_raw(&img), "x").unwrap(), img);
    }

    #[test]
    fn png_roundtrip_is_exact_on_u8_grid() {
        let img = Image::new(4, 5, 3, (0..60).map(|i| (i * 4) as f64 / 255.0).collect()).unwrap();
        let back = decode_image(&img.to_png_bytes().unwrap(), "x").unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grayscale_png_rejected() {
        let g = image::GrayImage::from_raw(2, 2, vec![0, 50, 100, 150]).unwrap();
        let mut buf = Cursor::new(Vec::new());
        g.write_to(&mut buf, ImageFormat::Png).unwrap();
        let err = decode_png(&buf.into_inner(), "g.png").unwrap_err();
        assert!(err.to_string().contains("g.png"), "{err}");
    }

    #[test]
    fn truncated_raw_rejected() {
        let mut bytes = encode_raw(&Image::filled(2, 2, [0.5; 3]));
        bytes.pop();
        assert!(decode_raw(&bytes, "t").is_err());
        assert!(decode_raw(b"RAWIMG 2 x 3\n", "t").is_err());
    }
}
