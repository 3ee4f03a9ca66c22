//! Class-stratified split assignment and the merge/re-split protocol.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::manifest::{Manifest, ManifestEntry, Split};
use crate::error::{CoreError, Result};

const TIE_TOL: f64 = 1e-9;

/// Largest-remainder apportionment of `n` items over `ratios`.
///
/// Each part gets the floor of its quota; leftover items go to the parts
/// with the largest fractional remainders. Equal remainders (within 1e-9)
/// favour the earlier part.
pub fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + TIE_TOL).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    let rem = |i: usize| (quotas[i] - counts[i] as f64).max(0.0);
    order.sort_by(|&a, &b| {
        let (ra, rb) = (rem(a), rem(b));
        if (ra - rb).abs() <= TIE_TOL {
            a.cmp(&b)
        } else {
            rb.total_cmp(&ra)
        }
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(CoreError::Split(format!("ratios must be positive, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(CoreError::Split(format!("ratios must sum to 1, got {sum}")));
    }
    Ok(())
}

fn path_hash(path: &str) -> [u8; 32] {
    Sha256::digest(path.as_bytes()).into()
}

/// Assigns `parts` to the entries at `indices` of `entries`, class by class.
fn stratify(entries: &mut [ManifestEntry], indices: &[usize], classes: &[String], parts: &[(Split, f64)], seed: u64) -> Result<()> {
    let ratios: Vec<f64> = parts.iter().map(|p| p.1).collect();
    check_ratios(&ratios)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (cid, class) in classes.iter().enumerate() {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| entries[i].class_id == cid).collect();
        if members.is_empty() {
            return Err(CoreError::EmptyClass(class.clone()));
        }
        members.sort_by_cached_key(|&i| path_hash(&entries[i].path));
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), &ratios);
        let mut it = members.into_iter();
        for (part, count) in parts.iter().zip(counts) {
            for i in it.by_ref().take(count) {
                entries[i].split = Some(part.0);
            }
        }
    }
    Ok(())
}

/// Assigns every entry to train/valid/test with per-class
/// largest-remainder counts. Deterministic for a given seed.
pub fn stratified_split(manifest: &Manifest, ratios: [f64; 3], seed: u64) -> Result<Manifest> {
    let mut out = manifest.clone();
    let all: Vec<usize> = (0..out.entries.len()).collect();
    let parts = [(Split::Train, ratios[0]), (Split::Valid, ratios[1]), (Split::Test, ratios[2])];
    stratify(&mut out.entries, &all, &manifest.classes, &parts, seed)?;
    Ok(out)
}

/// Final manifest after augmentation: original valid ∪ test become the
/// test split, and original train plus generated entries are re-split
/// into train/valid per class by `ratios`.
pub fn merge_and_resplit(original: &Manifest, generated: &[ManifestEntry], ratios: [f64; 2], seed: u64) -> Result<Manifest> {
    let by_path: HashMap<&str, &ManifestEntry> = original.entries.iter().map(|e| (e.path.as_str(), e)).collect();
    if let Some(e) = original.entries.iter().find(|e| e.split.is_none() || e.provenance.is_generated()) {
        return Err(CoreError::Split(format!(
            "original manifest entry {} must be an original with an assigned split",
            e.path
        )));
    }
    for g in generated {
        let src = g
            .source_id
            .as_deref()
            .ok_or_else(|| CoreError::Split(format!("generated entry {} has no source", g.path)))?;
        let Some(orig) = by_path.get(src) else {
            return Err(CoreError::Split(format!("generated entry {} names unknown source {src}", g.path)));
        };
        if orig.split != Some(Split::Train) {
            return Err(CoreError::Split(format!(
                "generated entry {} derives from {src}, which is in the {} split",
                g.path,
                orig.split.map_or("-", Split::as_str)
            )));
        }
        if orig.class != g.class {
            return Err(CoreError::Split(format!("generated entry {} changes class of {src}", g.path)));
        }
        if !g.provenance.is_generated() {
            return Err(CoreError::Split(format!("entry {} is tagged original", g.path)));
        }
    }
    let mut entries: Vec<ManifestEntry> = original.entries.clone();
    for e in &mut entries {
        if e.split != Some(Split::Train) {
            e.split = Some(Split::Test);
        }
    }
    entries.extend(generated.iter().cloned());
    let mut out = Manifest::with_classes(entries, original.classes.clone())?;
    let pool: Vec<usize> = (0..out.entries.len())
        .filter(|&i| out.entries[i].split != Some(Split::Test))
        .collect();
    let parts = [(Split::Train, ratios[0]), (Split::Valid, ratios[1])];
    stratify(&mut out.entries, &pool, &original.classes, &parts, seed)?;
    Ok(out)
}
