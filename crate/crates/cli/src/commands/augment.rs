use std::path::PathBuf;

use dvit_core::data::augment::{ablation_manifests, augment, AugmentConfig, Services, ABLATIONS};
use dvit_core::data::endpoint::{
    CaptionClient, GenerationClient, HttpEndpoint, MockCaption, MockGeneration, MockSuperres, SuperresClient,
};
use dvit_core::data::manifest::Manifest;

use crate::config::{CAPTION_TOKEN_ENV, GENERATION_TOKEN_ENV, SUPERRES_TOKEN_ENV};
use crate::error::{CliError, Result};
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Split manifest; only its train entries are augmented.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Directory relative manifest paths are resolved against.
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub root: PathBuf,
    /// Use offline stand-ins for the caption, generation and super-resolution services.
    #[arg(long)]
    pub mock: bool,
}

/// An HTTP client for `url`, authenticated when `token_env` is set.
pub fn endpoint(url: &str, token_env: &str, run: &Run) -> Result<HttpEndpoint> {
    if std::env::var_os(token_env).is_some() {
        Ok(HttpEndpoint::from_env(url, token_env, run.cfg.timeout())?)
    } else {
        Ok(HttpEndpoint::without_auth(url, run.cfg.timeout()))
    }
}

fn remote(url: &Option<String>, key: &str, token_env: &str, run: &Run) -> Result<HttpEndpoint> {
    let url = url.as_deref().ok_or_else(|| CliError::Usage(format!("{key} is not configured; set it or pass --mock")))?;
    endpoint(url, token_env, run)
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let cfg = AugmentConfig {
        superres: run.cfg.superres,
        diffusion: run.cfg.diffusion,
        diffusion_per_image: run.cfg.diffusion_per_image,
        canny_low: run.cfg.canny_low,
        canny_high: run.cfg.canny_high,
        max_in_flight: run.cfg.max_in_flight,
        retry: run.cfg.retry(),
        root: args.root.clone(),
        out_dir: run.out.join("generated"),
    };
    let (mock_caption, mock_superres) = (MockCaption::default(), MockSuperres::default());
    let (caption, generation, superres);
    let services = if args.mock {
        Services { caption: &mock_caption, generation: &MockGeneration, superres: &mock_superres }
    } else {
        caption = if cfg.diffusion { Some(remote(&run.cfg.caption_url, "caption_url", CAPTION_TOKEN_ENV, run)?) } else { None };
        generation =
            if cfg.diffusion { Some(remote(&run.cfg.generation_url, "generation_url", GENERATION_TOKEN_ENV, run)?) } else { None };
        superres = if cfg.superres { Some(remote(&run.cfg.superres_url, "superres_url", SUPERRES_TOKEN_ENV, run)?) } else { None };
        Services {
            caption: caption.as_ref().map_or(&mock_caption as &dyn CaptionClient, |c| c),
            generation: generation.as_ref().map_or(&MockGeneration as &dyn GenerationClient, |c| c),
            superres: superres.as_ref().map_or(&mock_superres as &dyn SuperresClient, |c| c),
        }
    };
    log::info!("augmenting {} train images", manifest.split(dvit_core::data::Split::Train).count());
    let outcome = augment(&manifest, &services, &cfg)?;

    let generated = Manifest::with_classes(outcome.generated.clone(), manifest.classes.clone())?;
    run.write("generated.tsv", generated.to_tsv())?;
    let prompts: String = outcome.prompts.iter().map(|(p, c)| format!("{p}\t{}\n", c.replace(['\t', '\n'], " "))).collect();
    run.write("prompts.tsv", prompts)?;
    let quarantine: String = outcome
        .quarantined
        .iter()
        .map(|q| format!("{}\t{}\t{}\n", q.path, q.stage, q.error.replace(['\t', '\n'], " ")))
        .collect();
    run.write("quarantine.tsv", quarantine)?;
    let selected = ABLATIONS
        .iter()
        .find(|&&(_, sr, diff)| sr == cfg.superres && diff == cfg.diffusion)
        .map_or("baseline", |a| a.0);
    for (name, m) in ablation_manifests(&manifest, &outcome, run.cfg.resplit_ratios, run.seed)? {
        run.write(format!("ablations/{name}.tsv"), m.to_tsv())?;
        if name == selected {
            run.write("final.tsv", m.to_tsv())?;
        }
    }
    for q in &outcome.quarantined {
        log::warn!("quarantined {} at {}: {}", q.path, q.stage, q.error);
    }
    run.detail("generated", outcome.generated.len());
    run.detail("quarantined", outcome.quarantined.len());
    run.detail("variant", selected);
    run.detail("mock", args.mock);
    Ok(())
}
