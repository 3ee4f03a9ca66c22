//! Full evaluation report with text and JSON renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::confusion::{
    cohen_kappa, f1_per_class, overall_accuracy, precision_per_class, recall_per_class, ConfusionMatrix,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    /// Recall of this class.
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    /// Kappa of the one-vs-rest binarized matrix.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub overall_accuracy: f64,
    pub mean_accuracy: f64,
    pub kappa: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub normalized_confusion: Vec<Vec<f64>>,
    /// Quantities that were undefined and reported as 0.
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// Builds the report. Undefined per-class ratios and kappas are
    /// reported as 0 with a warning; only an empty matrix is an error.
    pub fn from_confusion(m: &ConfusionMatrix) -> Result<Self> {
        let oa = overall_accuracy(m)?;
        let mut warnings = Vec::new();
        let kappa = cohen_kappa(m).unwrap_or_else(|e| {
            warnings.push(format!("overall kappa set to 0: {e}"));
            0.0
        });
        let (prec, rec, f1) = (precision_per_class(m), recall_per_class(m), f1_per_class(m));
        let mut per_class = Vec::with_capacity(m.num_classes());
        for i in 0..m.num_classes() {
            let name = &m.classes[i];
            if rec[i].1 {
                warnings.push(format!("class {name}: no samples, accuracy set to 0"));
            }
            if prec[i].1 {
                warnings.push(format!("class {name}: never predicted, precision set to 0"));
            }
            if f1[i].1 {
                warnings.push(format!("class {name}: precision + recall is 0, F1 set to 0"));
            }
            let k = cohen_kappa(&m.binarize(i)).unwrap_or_else(|_| {
                warnings.push(format!("class {name}: one-vs-rest kappa undefined, set to 0"));
                0.0
            });
            per_class.push(ClassMetrics {
                name: name.clone(),
                support: m.row_sum(i),
                accuracy: rec[i].0,
                precision: prec[i].0,
                f1: f1[i].0,
                kappa: k,
            });
        }
        let n = per_class.len() as f64;
        let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
        let mean_accuracy = avg(|c| c.accuracy);
        Ok(MetricsReport {
            samples: m.total(),
            overall_accuracy: oa,
            mean_accuracy,
            kappa,
            macro_precision: avg(|c| c.precision),
            macro_recall: mean_accuracy,
            macro_f1: avg(|c| c.f1),
            per_class,
            confusion: m.clone(),
            normalized_confusion: m.normalized(),
            warnings,
        })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], classes: &[String]) -> Result<Self> {
        let m = super::confusion::confusion(truth, pred, classes.len())?.with_names(classes)?;
        Self::from_confusion(&m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.per_class.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(s, "samples          {}", self.samples);
        let _ = writeln!(s, "overall accuracy {:.4}", self.overall_accuracy);
        let _ = writeln!(s, "mean accuracy    {:.4}", self.mean_accuracy);
        let _ = writeln!(s, "kappa            {:.4}", self.kappa);
        let _ = writeln!(s, "macro precision  {:.4}", self.macro_precision);
        let _ = writeln!(s, "macro recall     {:.4}", self.macro_recall);
        let _ = writeln!(s, "macro F1         {:.4}", self.macro_f1);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<w$}  {:>7}  {:>8}  {:>9}  {:>6}  {:>6}", "class", "support", "accuracy", "precision", "F1", "kappa");
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "{:<w$}  {:>7}  {:>8.4}  {:>9.4}  {:>6.4}  {:>6.4}",
                c.name, c.support, c.accuracy, c.precision, c.f1, c.kappa
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "normalized confusion (rows: true, columns: predicted)");
        for (c, row) in self.per_class.iter().zip(&self.normalized_confusion) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            let _ = writeln!(s, "{:<w$}  {}", c.name, cells.join(" "));
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s);
            for warn in &self.warnings {
                let _ = writeln!(s, "warning: {warn}");
            }
        }
        s
    }
}
