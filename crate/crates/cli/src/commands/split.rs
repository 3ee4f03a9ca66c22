use std::path::PathBuf;

use dvit_core::data::manifest::{Manifest, ManifestEntry, Split};
use dvit_core::data::split::stratified_split;

use crate::error::{CliError, Result};
use crate::files::class_tree;
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Manifest TSV to split; existing split tags are replaced.
    #[arg(long, value_name = "FILE", conflicts_with = "images", required_unless_present = "images")]
    pub manifest: Option<PathBuf>,
    /// Build the manifest from `DIR/<class>/<image>` instead.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Train, valid and test fractions, e.g. 0.8,0.1,0.1.
    #[arg(long, value_name = "A,B,C")]
    pub ratios: Option<String>,
}

pub fn parse_ratios<const N: usize>(s: &str) -> Result<[f64; N]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("ratios {s:?}: {e}")))?;
    parts.try_into().map_err(|p: Vec<f64>| CliError::Usage(format!("expected {N} ratios, got {}", p.len())))
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let ratios = match &args.ratios {
        Some(s) => parse_ratios::<3>(s)?,
        None => run.cfg.split_ratios,
    };
    let manifest = match (&args.manifest, &args.images) {
        (Some(path), _) => Manifest::load(path)?,
        (None, Some(dir)) => {
            let entries = class_tree(dir)?
                .into_iter()
                .map(|(class, path)| ManifestEntry::original(path.display().to_string(), class))
                .collect();
            Manifest::new(entries)?
        }
        (None, None) => return Err(CliError::Usage("one of --manifest or --images is required".into())),
    };
    let split = stratified_split(&manifest, ratios, run.seed)?;
    run.write("split.tsv", split.to_tsv())?;
    let counts: Vec<(&str, usize)> = Split::ALL.iter().map(|&s| (s.as_str(), split.count(s))).collect();
    log::info!("split {} images into {counts:?}", split.entries.len());
    run.detail("ratios", ratios);
    run.detail("counts", counts.iter().map(|(s, n)| (s.to_string(), *n)).collect::<std::collections::BTreeMap<_, _>>());
    run.detail("classes", &split.classes);
    Ok(())
}
