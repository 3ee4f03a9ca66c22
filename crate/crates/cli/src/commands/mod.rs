pub mod augment;
pub mod eval;
pub mod gradcam;
pub mod judge;
pub mod kid;
pub mod report;
pub mod split;
pub mod train;

use std::path::{Path, PathBuf};

use dvit_core::data::image::normalize;
use dvit_core::data::manifest::{Manifest, Split};
use dvit_core::data::synthetic::{class_names, texture_images};
use dvit_core::train::{Dataset, InMemoryDataset, ManifestDataset};
use dvit_core::{load_checkpoint, Dvit};

use crate::error::{CliError, Result};
use crate::{Command, Run};

/// Class names written next to checkpoints by `train`.
pub const CLASSES_FILE: &str = "classes.json";

pub fn dispatch(cmd: &Command, run: &mut Run) -> Result<()> {
    match cmd {
        Command::Split(a) => split::run(a, run),
        Command::Augment(a) => augment::run(a, run),
        Command::Train(a) => train::run(a, run),
        Command::Eval(a) => eval::run(a, run),
        Command::Gradcam(a) => gradcam::run(a, run),
        Command::Kid(a) => kid::run(a, run),
        Command::Judge(a) => judge::run(a, run),
        Command::Report(a) => report::run(a, run),
    }
}

pub fn parse_split(s: &str) -> Result<Split> {
    s.parse().map_err(CliError::Usage)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    Ok(Manifest::load(path)?)
}

/// Model plus class names, read from `classes.json` beside the checkpoint
/// when present.
pub fn load_model(path: &Path) -> Result<(Dvit, Vec<String>)> {
    let ck = load_checkpoint(path, None)?;
    let n = ck.model.cfg.num_classes;
    let beside = path.parent().unwrap_or(Path::new(".")).join(CLASSES_FILE);
    let names = match std::fs::read_to_string(&beside) {
        Ok(text) => {
            let names: Vec<String> = serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", beside.display())))?;
            if names.len() != n {
                return Err(CliError::Runtime(format!("{} lists {} classes, model has {n}", beside.display(), names.len())));
            }
            names
        }
        Err(_) => (0..n).map(|k| format!("class{k}")).collect(),
    };
    Ok((ck.model, names))
}

/// Where evaluation-style commands read images from.
#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Manifest TSV.
    #[arg(long, value_name = "FILE", conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Directory relative manifest paths are resolved against.
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub root: PathBuf,
    /// Use the built-in synthetic texture set with this many images per class.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    /// Number of synthetic classes.
    #[arg(long, default_value_t = 8, requires = "synthetic")]
    pub classes: usize,
}

impl DataArgs {
    pub fn require_source(&self) -> Result<()> {
        if self.manifest.is_none() && self.synthetic.is_none() {
            return Err(CliError::Usage("one of --manifest or --synthetic is required".into()));
        }
        Ok(())
    }
}

pub fn synthetic_dataset(classes: usize, per_class: usize, size: usize, seed: u64, run: &Run) -> InMemoryDataset {
    let spec = run.cfg.normalization(size);
    let imgs = texture_images(classes, per_class, size, 0.05, seed);
    InMemoryDataset {
        images: imgs.iter().map(|(i, _)| normalize(i, &spec).expect("synthetic images are RGB")).collect(),
        labels: imgs.iter().map(|(_, l)| *l).collect(),
        classes: class_names(classes),
    }
}

/// One split of the requested data at the model's input size.
pub fn split_dataset(data: &DataArgs, split: Split, size: usize, run: &Run) -> Result<Box<dyn Dataset>> {
    data.require_source()?;
    if let Some(per_class) = data.synthetic {
        let offset = match split {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        };
        let n = if split == Split::Train { per_class } else { per_class.div_ceil(4) };
        return Ok(Box::new(synthetic_dataset(data.classes, n, size, run.seed.wrapping_add(offset), run)));
    }
    let manifest = load_manifest(data.manifest.as_deref().expect("checked"))?;
    let spec = run.cfg.normalization(size);
    Ok(Box::new(ManifestDataset::new(&manifest, split, &data.root, &spec)?.cached()))
}
