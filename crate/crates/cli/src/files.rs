//! Directory scanning and the single-channel PNGs used for heatmaps and masks.

use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::error::{CliError, Result};

pub const IMAGE_EXTENSIONS: [&str; 2] = ["png", "raw"];

fn is_image(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Every image file below `dir`, sorted by path.
pub fn scan_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        if entry.file_type().is_file() && is_image(entry.path()) {
            out.push(entry.into_path());
        }
    }
    if out.is_empty() {
        return Err(CliError::Runtime(format!("no images found under {}", dir.display())));
    }
    Ok(out)
}

/// `(class, path)` for every image one level below a class directory.
pub fn class_tree(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).min_depth(2).max_depth(2).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        if entry.file_type().is_file() && is_image(entry.path()) {
            let class = entry.path().parent().and_then(Path::file_name).map(|s| s.to_string_lossy().into_owned());
            out.push((class.unwrap_or_default(), entry.into_path()));
        }
    }
    if out.is_empty() {
        return Err(CliError::Runtime(format!("no class directories with images under {}", dir.display())));
    }
    Ok(out)
}

/// Grayscale values in [0, 1], row-major, with height and width.
pub fn read_gray(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((h, w, img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()))
}

/// Binary mask resampled to `h×w` by nearest neighbour.
pub fn read_mask(path: &Path, h: usize, w: usize) -> Result<Vec<u8>> {
    let (mh, mw, data) = read_gray(path)?;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let sy = (y * mh / h).min(mh - 1);
        for x in 0..w {
            let sx = (x * mw / w).min(mw - 1);
            out.push(u8::from(data[sy * mw + sx] > 0.0));
        }
    }
    Ok(out)
}

/// File name without extension.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_resampling_is_nearest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::GrayImage::from_fn(2, 2, |x, _| image::Luma([if x == 0 { 255 } else { 0 }])).save(&p).unwrap();
        assert_eq!(read_mask(&p, 2, 4).unwrap(), vec![1, 1, 0, 0, 1, 1, 0, 0]);
    }
}
