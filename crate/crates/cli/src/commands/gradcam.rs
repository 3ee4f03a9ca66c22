use std::path::PathBuf;

use dvit_core::data::image::{load_image, normalize, resize_bilinear, Image};
use dvit_core::data::augment::resolve;
use dvit_core::explain::{grad_cam, render_overlay};
use dvit_core::train::Classifier;
use dvit_tensor::no_grad;

use super::{load_manifest, load_model, parse_split};
use crate::error::{CliError, Result};
use crate::files::stem;
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Image to explain. Repeatable.
    #[arg(long, value_name = "FILE", conflicts_with = "manifest")]
    pub image: Vec<PathBuf>,
    /// Explain images from one split of this manifest instead.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub root: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// At most this many manifest images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Class to explain, by name or index; defaults to the true class for
    /// manifest images and the predicted class otherwise.
    #[arg(long)]
    pub target: Option<String>,
    /// Activation to explain; overrides `gradcam_layer`.
    #[arg(long)]
    pub layer: Option<String>,
    /// Model name used in the output layout.
    #[arg(long, default_value = "dvit")]
    pub name: String,
}

fn heat_image(data: &[f64], h: usize, w: usize) -> Image {
    Image { height: h, width: w, channels: 1, data: data.to_vec() }
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let (model, names) = load_model(&args.checkpoint)?;
    let layer = args.layer.clone().unwrap_or_else(|| run.cfg.gradcam_layer.clone());
    let target = match &args.target {
        None => None,
        Some(t) => Some(match names.iter().position(|n| n == t) {
            Some(k) => k,
            None => t
                .parse::<usize>()
                .ok()
                .filter(|&k| k < names.len())
                .ok_or_else(|| CliError::Usage(format!("unknown target class {t:?}")))?,
        }),
    };
    // (path, true class when known)
    let items: Vec<(PathBuf, Option<usize>)> = match &args.manifest {
        Some(path) => {
            let m = load_manifest(path)?;
            let split = parse_split(&args.split)?;
            let limit = args.limit.unwrap_or(usize::MAX);
            m.split(split).take(limit).map(|e| (resolve(&args.root, &e.path), Some(e.class_id))).collect()
        }
        None if args.image.is_empty() => {
            return Err(CliError::Usage("one of --image or --manifest is required".into()));
        }
        None => args.image.iter().map(|p| (p.clone(), None)).collect(),
    };

    let spec = run.cfg.normalization(model.cfg.input_size);
    let mut tsv = String::from("image\tclass\tpredicted\theatmap\toverlay\n");
    for (path, truth) in &items {
        let img = load_image(path)?;
        let s = spec.size;
        let x = normalize(&img, &spec)?.reshape(&[1, 3, s, s])?;
        let pred = {
            let _g = no_grad();
            model.logits(&x)?.argmax_last()[0]
        };
        let class = target.or(*truth).unwrap_or(pred);
        let heat = grad_cam(&model, &x, class, &layer)?;
        let id = stem(path);
        let rel_heat = format!("heatmaps/{}/{}/{id}.png", args.name, names[class]);
        let rel_overlay = format!("overlays/{}/{}/{id}.png", args.name, names[class]);
        let heat_path = run.output(&rel_heat)?;
        heat_image(&heat.data, heat.height, heat.width).save_png(&heat_path)?;
        let overlay = render_overlay(&resize_bilinear(&img, heat.height, heat.width), &heat)?;
        overlay.save_png(&run.output(&rel_overlay)?)?;
        tsv.push_str(&format!("{}\t{}\t{}\t{rel_heat}\t{rel_overlay}\n", path.display(), names[class], names[pred]));
    }
    run.write("gradcam.tsv", tsv)?;
    run.detail("layer", &layer);
    run.detail("images", items.len());
    Ok(())
}
