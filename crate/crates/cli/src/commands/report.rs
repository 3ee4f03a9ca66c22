use std::path::Path;

use dvit_core::metrics::MetricsReport;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::Run;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `metrics.json` from `eval`, optionally labelled as `NAME=PATH`. Repeatable.
    #[arg(long = "metrics", value_name = "[NAME=]FILE", required = true)]
    pub metrics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Row {
    pub name: String,
    pub samples: u64,
    pub overall_accuracy: f64,
    pub mean_accuracy: f64,
    pub kappa: f64,
    pub macro_f1: f64,
}

fn load(spec: &str) -> Result<Row> {
    let (name, path) = match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() => (n.to_string(), Path::new(p)),
        _ => {
            let p = Path::new(spec);
            let name = p.parent().and_then(Path::file_name).map_or_else(|| spec.to_string(), |n| n.to_string_lossy().into_owned());
            (name, p)
        }
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let r: MetricsReport = serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(Row {
        name,
        samples: r.samples,
        overall_accuracy: r.overall_accuracy,
        mean_accuracy: r.mean_accuracy,
        kappa: r.kappa,
        macro_f1: r.macro_f1,
    })
}

pub fn table(rows: &[Row]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<w$}  {:>7}  {:>8}  {:>8}  {:>8}  {:>8}\n", "model", "samples", "OA%", "mAcc%", "kappa%", "F1%");
    for r in rows {
        s.push_str(&format!(
            "{:<w$}  {:>7}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}\n",
            r.name,
            r.samples,
            100.0 * r.overall_accuracy,
            100.0 * r.mean_accuracy,
            100.0 * r.kappa,
            100.0 * r.macro_f1
        ));
    }
    s
}

pub fn run(args: &Args, run: &mut Run) -> Result<()> {
    let rows = args.metrics.iter().map(|m| load(m)).collect::<Result<Vec<_>>>()?;
    run.write("report.txt", table(&rows))?;
    run.write_json("report.json", &rows)?;
    run.detail("rows", rows.len());
    Ok(())
}
