//! Training objectives.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const LOG_CLAMP: f64 = 1e-12;

/// Mean squared error over every entry of two equally shaped tensors.
pub fn mse_loss<F: Scalar>(scores: &Tensor<F>, targets: &Tensor<F>) -> Result<F> {
    if scores.shape() != targets.shape() {
        return Err(Error::dim("mse_loss", scores.shape(), targets.shape()));
    }
    let n = F::from_usize(scores.len()).unwrap_or_else(F::one);
    let sum: F = scores
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&s, &t)| (s - t) * (s - t))
        .sum();
    Ok(sum / n)
}

/// Gradient of [`mse_loss`] w.r.t. `scores`.
pub fn mse_grad<F: Scalar>(scores: &Tensor<F>, targets: &Tensor<F>) -> Result<Tensor<F>> {
    if scores.shape() != targets.shape() {
        return Err(Error::dim("mse_grad", scores.shape(), targets.shape()));
    }
    let scale = F::lit(2.0) / F::from_usize(scores.len()).unwrap_or_else(F::one);
    let data = scores
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&s, &t)| scale * (s - t))
        .collect();
    Tensor::from_vec(scores.shape(), data)
}

/// One-hot targets, `labels.len() × classes`.
pub fn one_hot<F: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<F>> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (row, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        t.data_mut()[row * classes + l] = F::one();
    }
    Ok(t)
}

fn check_probs<F: Scalar>(probs: &Tensor<F>, labels: &[usize]) -> Result<()> {
    if probs.shape().len() != 2 || probs.rows() != labels.len() {
        return Err(Error::dim("cross_entropy", probs.shape(), &[labels.len()]));
    }
    for r in 0..probs.rows() {
        let s: F = probs.row(r).iter().copied().sum();
        if (s - F::one()).abs() > F::lit(1e-5) {
            return Err(Error::InvalidInput(format!(
                "probability row {r} sums to {s:?}"
            )));
        }
        if labels[r] >= probs.cols() {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {} classes",
                labels[r],
                probs.cols()
            )));
        }
    }
    Ok(())
}

/// `-mean(log p[i, label_i])` with probabilities clamped at 1e-12.
pub fn cross_entropy_loss<F: Scalar>(probs: &Tensor<F>, labels: &[usize]) -> Result<F> {
    check_probs(probs, labels)?;
    let n = F::from_usize(labels.len()).unwrap_or_else(F::one);
    let sum: F = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs.get(r, l).max(F::lit(LOG_CLAMP)).ln())
        .sum();
    Ok(sum / n)
}

/// Gradient of [`cross_entropy_loss`] w.r.t. `probs`.
pub fn cross_entropy_grad<F: Scalar>(probs: &Tensor<F>, labels: &[usize]) -> Result<Tensor<F>> {
    check_probs(probs, labels)?;
    let n = F::from_usize(labels.len()).unwrap_or_else(F::one);
    let mut g = Tensor::zeros(probs.shape());
    let cols = probs.cols();
    for (r, &l) in labels.iter().enumerate() {
        let p = probs.get(r, l);
        if p > F::lit(LOG_CLAMP) {
            g.data_mut()[r * cols + l] = -F::one() / (n * p);
        }
    }
    Ok(g)
}
