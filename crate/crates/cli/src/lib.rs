//! The `dvit` command line: argument parsing, config resolution, output
//! bookkeeping and the run summary shared by every subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

pub use config::AppConfig;
pub use error::{CliError, Result};

pub const SUMMARY_FILE: &str = "run_summary.json";

#[derive(Debug, Parser)]
#[command(name = "dvit", version, about = "Remote-sensing scene classification with a deformable-convolution vision transformer")]
pub struct Cli {
    /// Directory that receives every output of the run.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,
    /// Flat JSON config file.
    #[arg(long, short = 'c', global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for every randomized step; chosen and recorded when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/valid/test split of a manifest or class-folder tree.
    Split(commands::split::Args),
    /// Super-resolution and diffusion augmentation of the train split.
    Augment(commands::augment::Args),
    /// Train a model.
    Train(commands::train::Args),
    /// Evaluate a checkpoint on one split.
    Eval(commands::eval::Args),
    /// Grad-CAM heatmaps and overlays.
    Gradcam(commands::gradcam::Args),
    /// Kernel Inception Distance between two image sets.
    Kid(commands::kid::Args),
    /// Score heatmaps against the localization rubric.
    Judge(commands::judge::Args),
    /// Comparison table over metrics files.
    Report(commands::report::Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Split(_) => "split",
            Command::Augment(_) => "augment",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Gradcam(_) => "gradcam",
            Command::Kid(_) => "kid",
            Command::Judge(_) => "judge",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Flag,
    Config,
    Auto,
}

/// State shared by a running subcommand.
pub struct Run {
    pub out: PathBuf,
    pub cfg: AppConfig,
    pub seed: u64,
    outputs: Vec<PathBuf>,
    details: Map<String, Value>,
}

impl Run {
    pub fn new(out: PathBuf, cfg: AppConfig, seed: u64) -> Self {
        Run { out, cfg, seed, outputs: Vec::new(), details: Map::new() }
    }

    /// Path under the output directory, with parents created and the
    /// file recorded as an output.
    pub fn output(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.output(rel)?;
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json(&mut self, rel: impl AsRef<Path>, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Adds a field to the run summary's `details` object.
    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    version: &'a str,
    argv: Vec<String>,
    status: &'a str,
    exit_code: i32,
    error: Option<String>,
    seed: Option<u64>,
    seed_source: Option<SeedSource>,
    config: Option<&'a AppConfig>,
    outputs: Vec<String>,
    details: &'a Map<String, Value>,
    started_unix: u64,
    seconds: f64,
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let text_argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            let out = out_from_raw_args(&text_argv);
            let msg = e.kind().to_string();
            let summary = Summary {
                command: "",
                version: env!("CARGO_PKG_VERSION"),
                argv: text_argv,
                status: "usage_error",
                exit_code: 1,
                error: Some(msg),
                seed: None,
                seed_source: None,
                config: None,
                outputs: Vec::new(),
                details: &Map::new(),
                started_unix,
                seconds: started.elapsed().as_secs_f64(),
            };
            write_summary(&out, &summary);
            return 1;
        }
    };
    init_logging(&cli);

    let name = cli.command.name();
    let cfg = AppConfig::resolve(cli.config.as_deref(), &cli.overrides);
    let (seed, source) = match (cli.seed, cfg.as_ref().ok().and_then(|c| c.seed)) {
        (Some(s), _) => (s, SeedSource::Flag),
        (None, Some(s)) => (s, SeedSource::Config),
        (None, None) => (rand::random::<u32>() as u64, SeedSource::Auto),
    };
    let mut run_state = None;
    let result = cfg.and_then(|cfg| {
        std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
        let out = std::path::absolute(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
        let run = run_state.insert(Run::new(out, cfg, seed));
        log::info!("{name}: seed {seed} ({source:?}), output {}", run.out.display());
        commands::dispatch(&cli.command, run)
    });
    let (code, error) = match &result {
        Ok(()) => (0, None),
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), Some(e.to_string()))
        }
    };
    let empty = Map::new();
    let summary = Summary {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        argv: text_argv,
        status: match code {
            0 => "ok",
            1 => "usage_error",
            _ => "runtime_error",
        },
        exit_code: code,
        error,
        seed: Some(seed),
        seed_source: Some(source),
        config: run_state.as_ref().map(|r| &r.cfg),
        outputs: run_state
            .as_ref()
            .map(|r| r.outputs.iter().map(|p| p.strip_prefix(&r.out).unwrap_or(p).display().to_string()).collect())
            .unwrap_or_default(),
        details: run_state.as_ref().map_or(&empty, |r| &r.details),
        started_unix,
        seconds: started.elapsed().as_secs_f64(),
    };
    write_summary(&cli.out, &summary);
    code
}

fn write_summary(out: &Path, summary: &Summary) {
    let path = out.join(SUMMARY_FILE);
    let written = std::fs::create_dir_all(out).and_then(|_| {
        let mut text = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)
    });
    if let Err(e) = written {
        eprintln!("error: cannot write {}: {e}", path.display());
    }
}

/// Best-effort `--out` lookup when the arguments do not parse.
fn out_from_raw_args(argv: &[String]) -> PathBuf {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--out" {
            if let Some(v) = it.next() {
                return PathBuf::from(v);
            }
        } else if let Some(v) = a.strip_prefix("--out=") {
            return PathBuf::from(v);
        }
    }
    PathBuf::from("out")
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}
