//! Generative augmentation of the training split.
//!
//! Each original training image gets one super-resolved copy and
//! `diffusion_per_image` edge-conditioned generations prompted by its
//! caption. Requests run on a bounded worker pool. An image whose requests
//! keep failing is quarantined and contributes nothing.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::canny::{canny_edges, DEFAULT_HIGH, DEFAULT_LOW};
use super::endpoint::{CaptionClient, GenerationClient, RetryPolicy, SuperresClient};
use super::image::decode_image;
use super::manifest::{Manifest, ManifestEntry, Provenance, Split};
use super::split::merge_and_resplit;
use crate::error::{CoreError, Result};

pub struct Services<'a> {
    pub caption: &'a dyn CaptionClient,
    pub generation: &'a dyn GenerationClient,
    pub superres: &'a dyn SuperresClient,
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub superres: bool,
    pub diffusion: bool,
    pub diffusion_per_image: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Directory that relative manifest paths are resolved against.
    pub root: PathBuf,
    /// Generated images are written under `out_dir/{superres,diffusion}`.
    pub out_dir: PathBuf,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            superres: true,
            diffusion: true,
            diffusion_per_image: 2,
            canny_low: DEFAULT_LOW,
            canny_high: DEFAULT_HIGH,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            root: PathBuf::from("."),
            out_dir: PathBuf::from("generated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quarantined {
    pub path: String,
    pub stage: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOutcome {
    pub generated: Vec<ManifestEntry>,
    /// `(source path, caption)` for every captioned image.
    pub prompts: Vec<(String, String)>,
    pub quarantined: Vec<Quarantined>,
}

pub fn resolve(root: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn file_stem(path: &str) -> String {
    let trimmed = path.rsplit_once('.').map_or(path, |(a, _)| a);
    trimmed
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Produced {
    entries: Vec<ManifestEntry>,
    prompt: Option<String>,
}

fn process(src: &ManifestEntry, services: &Services, cfg: &AugmentConfig) -> std::result::Result<Produced, Quarantined> {
    let fail = |stage: &'static str, e: CoreError| Quarantined { path: src.path.clone(), stage, error: e.to_string() };
    let path = resolve(&cfg.root, &src.path);
    let bytes = std::fs::read(&path).map_err(|e| fail("read", CoreError::io(&path, e)))?;
    let png = decode_image(&bytes, &src.path)
        .and_then(|img| img.to_png_bytes().map(|b| (img, b)))
        .map_err(|e| fail("decode", e))?;
    let (img, png) = png;
    let stem = file_stem(&src.path);
    let mut outputs: Vec<(PathBuf, Vec<u8>, Provenance)> = Vec::new();
    let mut prompt = None;
    if cfg.superres {
        let out = cfg.retry.run(|| services.superres.superres(&png)).map_err(|e| fail("superres", e))?;
        outputs.push((cfg.out_dir.join("superres").join(format!("{stem}_sr.png")), out, Provenance::Superres));
    }
    if cfg.diffusion {
        let text = cfg
            .retry
            .run(|| services.caption.caption(&png, &src.class))
            .map_err(|e| fail("caption", e))?;
        let edges = canny_edges(&img.to_gray255(), img.height, img.width, cfg.canny_low, cfg.canny_high)
            .map_err(|e| fail("edges", e))?;
        for k in 0..cfg.diffusion_per_image {
            let out = cfg
                .retry
                .run(|| services.generation.generate(&text, &edges, &png, k))
                .map_err(|e| fail("generation", e))?;
            outputs.push((cfg.out_dir.join("diffusion").join(format!("{stem}_gen{k}.png")), out, Provenance::Diffusion));
        }
        prompt = Some(text);
    }
    let mut entries = Vec::with_capacity(outputs.len());
    for (out_path, data, provenance) in outputs {
        if let Some(dir) = out_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| fail("write", CoreError::io(dir, e)))?;
        }
        std::fs::write(&out_path, data).map_err(|e| fail("write", CoreError::io(&out_path, e)))?;
        entries.push(ManifestEntry {
            path: out_path.display().to_string(),
            class: src.class.clone(),
            class_id: src.class_id,
            split: Some(Split::Train),
            provenance,
            source_id: Some(src.path.clone()),
            prompt: if provenance == Provenance::Diffusion { prompt.clone() } else { None },
        });
    }
    Ok(Produced { entries, prompt })
}

/// Runs augmentation over the original training entries of `manifest`.
///
/// Output order follows the manifest regardless of completion order.
pub fn augment(manifest: &Manifest, services: &Services, cfg: &AugmentConfig) -> Result<AugmentOutcome> {
    if cfg.max_in_flight == 0 {
        return Err(CoreError::Config("max_in_flight must be at least 1".into()));
    }
    if !(cfg.canny_low < cfg.canny_high) {
        return Err(CoreError::Thresholds { low: cfg.canny_low, high: cfg.canny_high });
    }
    let sources: Vec<&ManifestEntry> = manifest
        .split(Split::Train)
        .filter(|e| e.provenance == Provenance::Original)
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Produced>>> = Mutex::new((0..sources.len()).map(|_| None).collect());
    let quarantine: Mutex<Vec<(usize, Quarantined)>> = Mutex::new(Vec::new());
    let workers = cfg.max_in_flight.min(sources.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(src) = sources.get(i) else { break };
                match process(src, services, cfg) {
                    Ok(p) => results.lock().unwrap()[i] = Some(p),
                    Err(q) => quarantine.lock().unwrap().push((i, q)),
                }
            });
        }
    });
    let mut outcome = AugmentOutcome::default();
    for (src, produced) in sources.iter().zip(results.into_inner().unwrap()) {
        if let Some(p) = produced {
            outcome.generated.extend(p.entries);
            if let Some(t) = p.prompt {
                outcome.prompts.push((src.path.clone(), t));
            }
        }
    }
    let mut q = quarantine.into_inner().unwrap();
    q.sort_by_key(|(i, _)| *i);
    outcome.quarantined = q.into_iter().map(|(_, q)| q).collect();
    Ok(outcome)
}

/// The four pipeline variants: name, superres on, diffusion on.
pub const ABLATIONS: [(&str, bool, bool); 4] = [
    ("baseline", false, false),
    ("superres", true, false),
    ("diffusion", false, true),
    ("superres+diffusion", true, true),
];

/// Final manifests for each ablation variant, built from one full
/// augmentation run by keeping only the enabled provenances.
pub fn ablation_manifests(
    split_manifest: &Manifest,
    outcome: &AugmentOutcome,
    ratios: [f64; 2],
    seed: u64,
) -> Result<Vec<(&'static str, Manifest)>> {
    ABLATIONS
        .iter()
        .map(|&(name, sr, diff)| {
            let kept: Vec<ManifestEntry> = outcome
                .generated
                .iter()
                .filter(|e| match e.provenance {
                    Provenance::Superres => sr,
                    Provenance::Diffusion => diff,
                    Provenance::Original => false,
                })
                .cloned()
                .collect();
            Ok((name, merge_and_resplit(split_manifest, &kept, ratios, seed)?))
        })
        .collect()
}
