use std::path::PathBuf;

use dvit_core::train::predict;
use dvit_core::metrics::MetricsReport;

use super::{load_manifest, load_model, parse_split, split_dataset, DataArgs};
use crate::error::{CliError, Result};
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// train, valid or test.
    #[arg(long, default_value = "test")]
    pub split: String,
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let split = parse_split(&args.split)?;
    let (model, names) = load_model(&args.checkpoint)?;
    let ds = split_dataset(&args.data, split, model.cfg.input_size, run)?;
    if ds.classes() != names.as_slice() {
        return Err(CliError::Runtime(format!(
            "data classes {:?} differ from the checkpoint's {:?}",
            ds.classes(),
            names
        )));
    }
    let pred = predict(&model, ds.as_ref(), run.cfg.batch_size)?;
    let truth: Vec<usize> = (0..ds.len()).map(|i| ds.label(i)).collect();
    let report = MetricsReport::from_predictions(&truth, &pred, &names)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }

    let ids: Vec<String> = match &args.data.manifest {
        Some(path) => load_manifest(path)?.split(split).map(|e| e.path.clone()).collect(),
        None => (0..ds.len()).map(|i| format!("synthetic/{i}")).collect(),
    };
    let mut tsv = String::from("id\ttruth\tprediction\n");
    for ((id, t), p) in ids.iter().zip(&truth).zip(&pred) {
        tsv.push_str(&format!("{id}\t{}\t{}\n", names[*t], names[*p]));
    }
    run.write("predictions.tsv", tsv)?;
    run.write("metrics.json", report.to_json())?;
    run.write("metrics.txt", report.to_text())?;
    log::info!("OA {:.4}, mAcc {:.4}, kappa {:.4}", report.overall_accuracy, report.mean_accuracy, report.kappa);
    run.detail("split", split.to_string());
    run.detail("samples", report.samples);
    run.detail("overall_accuracy", report.overall_accuracy);
    run.detail("mean_accuracy", report.mean_accuracy);
    run.detail("kappa", report.kappa);
    Ok(())
}
