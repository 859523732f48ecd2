//! Label-smoothed cross-entropy averaged over a batch of windows.

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Floor applied inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
/// Tolerance on softmax rows summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub num_classes: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, num_classes: 2 }
    }
}

impl LossConfig {
    pub fn new(epsilon: f64, num_classes: usize) -> Result<Self> {
        let cfg = Self { epsilon, num_classes };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("label smoothing epsilon {} not in [0, 1)", self.epsilon)));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidParameter(format!("num_classes {} < 2", self.num_classes)));
        }
        Ok(())
    }
}

fn next_toward(x: f64, up: bool) -> f64 {
    let bits = x.to_bits();
    // x is in (0, 1] so the bit pattern is monotone in the value
    f64::from_bits(if up { bits + 1 } else { bits - 1 })
}

/// `q_y = 1 - eps`, `q_i = eps / (C - 1)` otherwise.
///
/// `q_y` is nudged by single ulps until the left-to-right sum is exactly 1
/// when such a value exists (always the case for two classes).
pub fn smoothed_labels(y: usize, cfg: &LossConfig) -> Vec<f64> {
    let c = cfg.num_classes;
    assert!(y < c, "class {y} out of range for {c} classes");
    let off = cfg.epsilon / (c - 1) as f64;
    let mut q = vec![off; c];
    q[y] = 1.0 - cfg.epsilon;
    for _ in 0..64 {
        let s: f64 = q.iter().sum();
        if s == 1.0 {
            break;
        }
        q[y] = next_toward(q[y], s < 1.0);
    }
    q
}

fn check_batch<T: Real>(probs: &Tensor<T>, labels: &[usize], cfg: &LossConfig) -> Result<usize> {
    cfg.validate()?;
    let c = cfg.num_classes;
    match *probs.shape() {
        [b, cc] if cc == c && b == labels.len() && b > 0 => {}
        ref s => {
            return Err(Error::ShapeMismatch(format!(
                "loss expects probabilities [{}, {c}], got {s:?}",
                labels.len()
            )))
        }
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::ShapeMismatch(format!("label {bad} out of range for {c} classes")));
    }
    for (i, row) in probs.data().chunks_exact(c).enumerate() {
        let s: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("probability row {i} sums to {s}")));
        }
    }
    Ok(labels.len())
}

/// `-(1/|W|) sum_w sum_i q_i log max(p_i, floor)`, computed in f64.
pub fn label_smoothed_ce<T: Real>(probs: &Tensor<T>, labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    let n = check_batch(probs, labels, cfg)?;
    let c = cfg.num_classes;
    let total: f64 = probs
        .data()
        .chunks_exact(c)
        .zip(labels)
        .map(|(row, &y)| {
            let q = smoothed_labels(y, cfg);
            -row.iter().zip(&q).map(|(p, qi)| qi * p.as_f64().max(LOG_FLOOR).ln()).sum::<f64>()
        })
        .sum();
    Ok(total / n as f64)
}

/// Loss plus its gradient with respect to the pre-softmax logits, `(p - q) / |W|`.
pub fn label_smoothed_ce_with_grad<T: Real>(
    probs: &Tensor<T>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(f64, Tensor<T>)> {
    let loss = label_smoothed_ce(probs, labels, cfg)?;
    let c = cfg.num_classes;
    let n = labels.len() as f64;
    let mut grad = Vec::with_capacity(probs.len());
    for (row, &y) in probs.data().chunks_exact(c).zip(labels) {
        let q = smoothed_labels(y, cfg);
        grad.extend(row.iter().zip(&q).map(|(p, qi)| T::from_f64_lossy((p.as_f64() - qi) / n)));
    }
    Ok((loss, Tensor::from_vec(probs.shape().to_vec(), grad)?))
}
