use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Softmax of one row, stabilized by max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy over the batch and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "label count",
            expected: logits.len(),
            found: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let batch = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: row.len(),
            });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| libm::exp(z - max)).sum();
        let log_sum = max + libm::log(sum);
        loss += log_sum - row[label];
        let mut g: Vec<f64> = row.iter().map(|&z| libm::exp(z - log_sum) / batch).collect();
        g[label] -= 1.0 / batch;
        grads.push(g);
    }
    Ok((loss / batch, grads))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
