// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    /// Softmax over the block followed by negative log-likelihood of the one-hot target.
    SoftmaxCrossEntropy,
}

impl LossKind {
    /// Loss of one output block and its gradient with respect to the block.
    pub fn block(self, pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        debug_assert_eq!(pred.len(), target.len());
        match self {
            LossKind::Mse => {
                let k = pred.len() as f64;
                let mut loss = 0.0;
                let grad = pred
                    .iter()
                    .zip(target)
                    .map(|(p, t)| {
                        let e = p - t;
                        loss += e * e;
                        2.0 * e / k
                    })
                    .collect();
                (loss / k, grad)
            }
            LossKind::SoftmaxCrossEntropy => {
                let probs = softmax(pred);
                let class = argmax(target);
                let loss = -probs[class].max(f64::MIN_POSITIVE).ln();
                let mut grad = probs;
                grad[class] -= 1.0;
                (loss, grad)
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry, earliest on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
