use std::io::Write;

use dvit_core::data::manifest::Split;
use dvit_core::model::Dvit;
use dvit_core::train::{fit, resume, TrainState, BEST_CHECKPOINT};

use super::{split_dataset, DataArgs, CLASSES_FILE};
use crate::error::{CliError, Result};
use crate::Run;

pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub data: DataArgs,
    /// Continue from the last checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    args.data.require_source()?;
    let size = run.cfg.model_config(1).input_size;
    let train = split_dataset(&args.data, Split::Train, size, run)?;
    let valid = match split_dataset(&args.data, Split::Valid, size, run) {
        Ok(v) => Some(v),
        Err(CliError::Core(dvit_core::CoreError::EmptySplit(_))) => {
            log::warn!("no validation split; only the last checkpoint is kept");
            None
        }
        Err(e) => return Err(e),
    };
    let classes = train.classes().to_vec();
    let ckpt_dir = run.out.join("checkpoints");
    let cfg = run.cfg.train_config(classes.len(), run.seed, Some(&ckpt_dir));
    run.write_json(format!("checkpoints/{CLASSES_FILE}"), &classes)?;

    let (mut model, mut state) = if args.resume {
        let (m, s) = resume(&ckpt_dir, &cfg)?;
        log::info!("resuming after epoch {}", s.epoch);
        (m, s)
    } else {
        (Dvit::new(&cfg.model, cfg.seed)?, TrainState::fresh(&cfg))
    };
    log::info!(
        "training {} parameters on {} images for {} epochs",
        dvit_nn::param_count(&model),
        train.len(),
        cfg.epochs
    );

    let log_path = run.output(LOG_FILE)?;
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(args.resume)
        .write(true)
        .truncate(!args.resume)
        .open(&log_path)
        .map_err(|e| CliError::io(&log_path, e))?;
    let mut write_err = None;
    let log = fit(&mut model, &mut state, train.as_ref(), valid.as_deref(), &cfg, &mut |rec| {
        let oa = rec.valid.as_ref().map(|v| format!(", valid OA {:.4}", v.overall_accuracy)).unwrap_or_default();
        log::info!("epoch {}: loss {:.4}, train acc {:.4}{oa}", rec.epoch, rec.train_loss, rec.train_accuracy);
        let line = serde_json::to_string(rec).map_err(std::io::Error::other);
        if let Err(e) = line.and_then(|l| writeln!(log_file, "{l}")) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::io(&log_path, e));
    }
    if state.best.is_some() {
        run.output(format!("checkpoints/{BEST_CHECKPOINT}"))?;
    }
    run.output(format!("checkpoints/{}", dvit_core::train::LAST_CHECKPOINT))?;

    if let Some(last) = log.epochs.iter().rev().find_map(|e| e.valid.as_ref()) {
        run.write_json("valid_metrics.json", last)?;
        run.detail("valid_overall_accuracy", last.overall_accuracy);
    }
    run.detail("epochs_run", log.epochs.len());
    run.detail("final_train_loss", log.epochs.last().map(|e| e.train_loss));
    run.detail("best", state.best.map(|(score, epoch)| serde_json::json!({"score": score, "epoch": epoch})));
    run.detail("classes", &classes);
    Ok(())
}
