use dvit_tensor::Tensor;

use crate::error::{NnError, Result};

/// Mean softmax cross-entropy of `N×C` logits against class indices,
/// computed through log-sum-exp.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(NnError::shape(
            "cross_entropy",
            format!("logits {s:?} for {} labels", labels.len()),
        ));
    }
    let (n, c) = (s[0], s[1]);
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(NnError::LabelOutOfRange { label, classes: c });
    }
    let d = logits.data();
    let mut probs = vec![0.0; n * c];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &d[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[label];
        for j in 0..c {
            probs[i * c + j] = (row[j] - lse).exp();
        }
    }
    let labels = labels.to_vec();
    Ok(Tensor::from_op(
        vec![total / n as f64],
        &[],
        "cross_entropy",
        vec![logits.clone()],
        Box::new(move |grad, _, _| {
            let scale = grad[0] / n as f64;
            let mut g = probs.clone();
            for (i, &label) in labels.iter().enumerate() {
                g[i * c + label] -= 1.0;
            }
            g.iter_mut().for_each(|v| *v *= scale);
            vec![Some(g)]
        }),
    )?)
}
