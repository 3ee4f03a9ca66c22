use std::path::{Path, PathBuf};

use dvit_core::data::image::{load_image, normalize, resize_bilinear};
use dvit_core::metrics::{kid, KidConfig};
use dvit_core::Dvit;
use dvit_nn::Ctx;
use dvit_tensor::no_grad;

use super::load_model;
use crate::error::Result;
use crate::files::scan_images;
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of reference images.
    #[arg(long, value_name = "DIR")]
    pub real: PathBuf,
    /// Directory of generated images.
    #[arg(long, value_name = "DIR")]
    pub generated: PathBuf,
    /// Embed images with this model's normalized CLS features instead of raw pixels.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Side length images are resized to for pixel features.
    #[arg(long, default_value_t = 16)]
    pub size: usize,
}

enum Features {
    Pixels(usize),
    Model(Box<Dvit>),
}

fn embed(dir: &Path, features: &Features, run: &Run) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for path in scan_images(dir)? {
        let img = load_image(&path)?;
        let v = match features {
            Features::Pixels(s) => resize_bilinear(&img, *s, *s).data,
            Features::Model(model) => {
                let spec = run.cfg.normalization(model.cfg.input_size);
                let s = spec.size;
                let x = normalize(&img, &spec)?.reshape(&[1, 3, s, s])?;
                let _g = no_grad();
                model.features(&x, &mut Ctx::eval())?.to_vec()
            }
        };
        out.push(v);
    }
    Ok(out)
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let features = match &args.checkpoint {
        Some(p) => Features::Model(Box::new(load_model(p)?.0)),
        None => Features::Pixels(args.size),
    };
    let real = embed(&args.real, &features, run)?;
    let generated = embed(&args.generated, &features, run)?;
    let cfg = KidConfig {
        subsets: run.cfg.kid_subsets,
        subset_size: run.cfg.kid_subset_size,
        degree: run.cfg.kid_degree,
        seed: run.seed,
        disjoint: false,
    };
    let est = kid(&real, &generated, &cfg)?;
    log::info!("KID ×1000 = {:.4} ± {:.4} over {} subsets of {}", est.value_x1000, est.std * 1000.0, est.subsets, est.subset_size);
    run.write_json("kid.json", &est)?;
    run.detail("features", if args.checkpoint.is_some() { "model" } else { "pixels" });
    run.detail("real", real.len());
    run.detail("generated", generated.len());
    run.detail("kid_x1000", est.value_x1000);
    Ok(())
}
