//! Reconstruction and classification losses with their gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean squared error over all elements. Returns the loss and its gradient
/// wrt `pred`, which is `2 (pred - target) / n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mse: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("mse of empty tensors".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data().iter()) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("mse loss is {}", loss)));
    }
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}

/// Softmax probabilities, stabilized by subtracting the max logit.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Softmax cross entropy against a single target class. Returns the loss
/// `logsumexp(logits) - logits[target]` and its gradient wrt the logits,
/// which is `softmax(logits) - onehot(target)`.
pub fn cross_entropy_loss(logits: &Tensor, target: usize) -> Result<(f64, Tensor)> {
    let c = logits.len();
    if c == 0 {
        return Err(Error::InvalidInput("cross entropy of empty logits".into()));
    }
    if target >= c {
        return Err(Error::InvalidInput(format!(
            "target class {} out of range for {} logits",
            target, c
        )));
    }
    let data = logits.data();
    let m = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = data.iter().map(|&l| (l - m).exp()).sum();
    let lse = m + sum_exp.ln();
    let loss = lse - data[target];
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("cross entropy loss is {}", loss)));
    }
    let mut grad = softmax(data);
    grad[target] -= 1.0;
    Ok((loss, Tensor::from_vec(logits.shape(), grad)?))
}
