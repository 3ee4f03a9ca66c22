//! Confusion matrices and the classification scores derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub classes: Vec<String>,
}

pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(CoreError::Metric(format!("{} labels but {} predictions", truth.len(), pred.len())));
    }
    let mut m = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(pred) {
        for l in [t, p] {
            if l >= classes {
                return Err(CoreError::Label { label: l, classes });
            }
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
            classes: (0..classes).map(|i| format!("class{i}")).collect(),
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(CoreError::Metric("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts, classes: (0..c).map(|i| format!("class{i}")).collect() })
    }

    pub fn with_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.counts.len() {
            return Err(CoreError::Metric(format!("{} names for {} classes", names.len(), self.counts.len())));
        }
        self.classes = names.to_vec();
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, i: usize) -> u64 {
        self.counts[i][i]
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn fn_(&self, i: usize) -> u64 {
        self.row_sum(i) - self.tp(i)
    }

    pub fn fp(&self, i: usize) -> u64 {
        self.col_sum(i) - self.tp(i)
    }

    pub fn tn(&self, i: usize) -> u64 {
        self.total() - self.tp(i) - self.fp(i) - self.fn_(i)
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.tp(i)).sum()
    }

    /// Row-normalized matrix; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let s: u64 = r.iter().sum();
                r.iter().map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 }).collect()
            })
            .collect()
    }

    /// One-vs-rest 2×2 matrix for class `i`, positive class first.
    pub fn binarize(&self, i: usize) -> ConfusionMatrix {
        let (tp, fn_, fp, tn) = (self.tp(i), self.fn_(i), self.fp(i), self.tn(i));
        ConfusionMatrix {
            counts: vec![vec![tp, fn_], vec![fp, tn]],
            classes: vec![self.classes[i].clone(), "rest".into()],
        }
    }
}

fn nonempty(m: &ConfusionMatrix) -> Result<f64> {
    match m.total() {
        0 => Err(CoreError::Metric("empty confusion matrix".into())),
        t => Ok(t as f64),
    }
}

pub fn overall_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    Ok(m.trace() as f64 / nonempty(m)?)
}

/// Mean of per-class recall. A class with no samples is an error.
pub fn mean_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    nonempty(m)?;
    let mut sum = 0.0;
    for i in 0..m.num_classes() {
        let r = m.row_sum(i);
        if r == 0 {
            return Err(CoreError::Metric(format!(
                "mean accuracy undefined: class {} has no samples",
                m.classes[i]
            )));
        }
        sum += m.tp(i) as f64 / r as f64;
    }
    Ok(sum / m.num_classes() as f64)
}

/// Observed and chance agreement `(p_o, p_e)`.
pub fn agreement(m: &ConfusionMatrix) -> Result<(f64, f64)> {
    let t = nonempty(m)?;
    let po = m.trace() as f64 / t;
    let pe = (0..m.num_classes())
        .map(|i| m.row_sum(i) as f64 * m.col_sum(i) as f64)
        .sum::<f64>()
        / (t * t);
    Ok((po, pe))
}

pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<f64> {
    let (po, pe) = agreement(m)?;
    if (1.0 - pe).abs() < 1e-15 {
        return Err(CoreError::Metric("kappa undefined: chance agreement is 1".into()));
    }
    Ok((po - pe) / (1.0 - pe))
}

fn ratio_or_zero(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class precision; zero with a flag where nothing was predicted.
pub fn precision_per_class(m: &ConfusionMatrix) -> Vec<(f64, bool)> {
    (0..m.num_classes()).map(|i| ratio_or_zero(m.tp(i), m.col_sum(i))).collect()
}

/// Per-class recall; zero with a flag where the class has no samples.
pub fn recall_per_class(m: &ConfusionMatrix) -> Vec<(f64, bool)> {
    (0..m.num_classes()).map(|i| ratio_or_zero(m.tp(i), m.row_sum(i))).collect()
}

/// Per-class F1; zero with a flag where precision + recall is zero.
pub fn f1_per_class(m: &ConfusionMatrix) -> Vec<(f64, bool)> {
    precision_per_class(m)
        .into_iter()
        .zip(recall_per_class(m))
        .map(|((p, _), (r, _))| if p + r == 0.0 { (0.0, true) } else { (2.0 * p * r / (p + r), false) })
        .collect()
}

fn mean(v: &[(f64, bool)]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64
    }
}

pub fn macro_precision(m: &ConfusionMatrix) -> f64 {
    mean(&precision_per_class(m))
}

pub fn macro_recall(m: &ConfusionMatrix) -> f64 {
    mean(&recall_per_class(m))
}

pub fn macro_f1(m: &ConfusionMatrix) -> f64 {
    mean(&f1_per_class(m))
}
