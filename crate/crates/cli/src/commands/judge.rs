use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dvit_core::data::image::{load_image, Image};
use dvit_core::explain::{
    aggregate_scores, judge_prompt, parse_verdict, scores_table, write_verdicts, Heatmap, JudgeClient, JudgeRequest,
    JudgeVerdict, MockJudge,
};
use walkdir::WalkDir;

use super::augment::endpoint;
use crate::config::JUDGE_TOKEN_ENV;
use crate::error::{CliError, Result};
use crate::files::{read_gray, read_mask, stem};
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `DIR/<model>/<class>/<id>.png`, or `DIR/<class>/<id>.png` for one model.
    #[arg(long, value_name = "DIR")]
    pub heatmaps: PathBuf,
    /// Ground-truth masks at `DIR/<class>/<id>.png`.
    #[arg(long, value_name = "DIR")]
    pub masks: Option<PathBuf>,
    /// Original images at `DIR/<class>/<id>.png`.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Score offline by heat mass inside the masks.
    #[arg(long)]
    pub mock: bool,
}

struct Item {
    model: String,
    class: String,
    id: String,
    path: PathBuf,
}

fn collect(dir: &Path) -> Result<Vec<Item>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).min_depth(2).max_depth(3).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        let png = entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if entry.file_type().is_file() && png {
            files.push((entry.depth(), entry.into_path()));
        }
    }
    let nested = files.iter().any(|(d, _)| *d == 3);
    let single = dir.file_name().map_or("model".into(), |n| n.to_string_lossy().into_owned());
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let items: Vec<Item> = files
        .into_iter()
        .filter(|(d, _)| *d == if nested { 3 } else { 2 })
        .map(|(_, path)| {
            let class_dir = path.parent().expect("depth ≥ 2");
            let model = if nested { name(class_dir.parent().expect("depth 3")) } else { single.clone() };
            Item { model, class: name(class_dir), id: stem(&path), path }
        })
        .collect();
    if items.is_empty() {
        return Err(CliError::Runtime(format!("no heatmaps found under {}", dir.display())));
    }
    Ok(items)
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let remote;
    let client: &dyn JudgeClient = if args.mock {
        if args.masks.is_none() {
            return Err(CliError::Usage("--mock needs --masks".into()));
        }
        &MockJudge
    } else {
        let url = run
            .cfg
            .judge_url
            .as_deref()
            .ok_or_else(|| CliError::Usage("judge_url is not configured; set it or pass --mock".into()))?;
        if args.images.is_none() {
            return Err(CliError::Usage("a remote judge needs --images".into()));
        }
        remote = endpoint(url, JUDGE_TOKEN_ENV, run)?;
        &remote
    };

    let items = collect(&args.heatmaps)?;
    let classes: Vec<&str> = {
        let mut c: Vec<&str> = items.iter().map(|i| i.class.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut verdicts = Vec::with_capacity(items.len());
    for item in &items {
        let (h, w, data) = read_gray(&item.path)?;
        let heatmap = Heatmap {
            height: h,
            width: w,
            data,
            layer: "file".into(),
            class_id: classes.binary_search(&item.class.as_str()).expect("collected"),
        };
        let rel = Path::new(&item.class).join(format!("{}.png", item.id));
        let mask = args.masks.as_ref().map(|d| read_mask(&d.join(&rel), h, w)).transpose()?;
        let image = match &args.images {
            Some(d) => load_image(&d.join(&rel))?,
            None => Image::filled(h, w, [0.0; 3]),
        };
        let image_ref = format!("{}/{}", item.class, item.id);
        // Model identity is kept out of the prompt; the judge sees an opaque heatmap id.
        let heat_ref = format!("heatmap-{:04}", verdicts.len());
        let prompt = judge_prompt(&item.class, &image_ref, &heat_ref);
        let request = JudgeRequest { prompt: &prompt, image: &image, heatmap: &heatmap, mask: mask.as_deref() };
        let text = run.cfg.retry().run(|| client.judge(&request)).map_err(CliError::from)?;
        let (score, explanation) = parse_verdict(&text)?;
        log::debug!("{} {}/{}: {score}", item.model, item.class, item.id);
        verdicts.push(JudgeVerdict {
            score,
            explanation,
            model: item.model.clone(),
            class_name: item.class.clone(),
            image_id: item.id.clone(),
        });
    }

    let mut jsonl = Vec::new();
    write_verdicts(&mut jsonl, &verdicts).map_err(|e| CliError::Runtime(e.to_string()))?;
    run.write("verdicts.jsonl", jsonl)?;
    let scores = aggregate_scores(&verdicts)?;
    run.write("scores.txt", scores_table(&scores))?;
    run.write_json("scores.json", &scores)?;
    let mut per_model: BTreeMap<&str, f64> = BTreeMap::new();
    for s in &scores {
        per_model.insert(&s.model, s.mean);
    }
    run.detail("verdicts", verdicts.len());
    run.detail("mean_scores", per_model);
    run.detail("mock", args.mock);
    Ok(())
}
