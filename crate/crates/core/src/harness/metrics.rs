// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::loss::argmax;
use super::model::{DataLayout, Model};
use crate::error::{Error, Result};
use crate::tasks::TaskDataset;

/// Targets with magnitude below this are left out of MAPE.
pub const MAPE_EXCLUSION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    LogMse,
    Rmse,
    Mape,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mse, Metric::LogMse, Metric::Rmse, Metric::Mape, Metric::Accuracy];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::LogMse => "log_mse",
            Metric::Rmse => "rmse",
            Metric::Mape => "mape",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Unknown {
            what: "metric",
            name: s.to_string(),
        })
    }
}

/// Every metric over the scored (final) target block of each sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    /// Base-10 logarithm of `mse`.
    pub log_mse: f64,
    pub rmse: f64,
    /// Percentage; `None` when every target was excluded.
    pub mape: Option<f64>,
    pub mape_included: usize,
    pub mape_excluded: usize,
    /// Fraction of samples whose output argmax matches the target argmax (classification tasks only).
    pub accuracy: Option<f64>,
    pub samples: usize,
}

impl MetricSet {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Mse => Some(self.mse),
            Metric::LogMse => Some(self.log_mse),
            Metric::Rmse => Some(self.rmse),
            Metric::Mape => self.mape,
            Metric::Accuracy => self.accuracy,
        }
    }

    /// Metrics from paired scored predictions and targets.
    pub fn compute(preds: &[Vec<f64>], targets: &[&[f64]], classification: bool) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Empty("cannot evaluate on an empty dataset".into()));
        }
        let mut sq = 0.0;
        let mut count = 0usize;
        let mut ape = 0.0;
        let mut included = 0usize;
        let mut excluded = 0usize;
        let mut correct = 0usize;
        for (p, t) in preds.iter().zip(targets) {
            if p.len() != t.len() {
                return Err(Error::Dimension(format!(
                    "prediction of width {} against target of width {}",
                    p.len(),
                    t.len()
                )));
            }
            for (a, b) in p.iter().zip(t.iter()) {
                sq += (a - b) * (a - b);
                count += 1;
                if b.abs() < MAPE_EXCLUSION {
                    excluded += 1;
                } else {
                    ape += ((a - b) / b).abs();
                    included += 1;
                }
            }
            if argmax(p) == argmax(t) {
                correct += 1;
            }
        }
        let mse = sq / count as f64;
        Ok(Self {
            mse,
            log_mse: mse.log10(),
            rmse: mse.sqrt(),
            mape: (included > 0).then(|| 100.0 * ape / included as f64),
            mape_included: included,
            mape_excluded: excluded,
            accuracy: classification.then(|| correct as f64 / preds.len() as f64),
            samples: preds.len(),
        })
    }
}

/// Summary of forward iteration counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: usize,
    pub solves: usize,
}

impl IterationStats {
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        if counts.is_empty() {
            return None;
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        // Nearest-rank percentile.
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            mean: sorted.iter().sum::<usize>() as f64 / n as f64,
            median,
            p95: sorted[rank - 1] as f64,
            max: sorted[n - 1],
            solves: n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricSet,
    pub iterations: Option<IterationStats>,
}

/// Runs `model` over `ds` and scores the final target block of every sample.
pub fn evaluate(model: &Model, ds: &TaskDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Empty("cannot evaluate on an empty dataset".into()));
    }
    ds.validate()?;
    let layout = DataLayout::of(ds);
    model.check_layout(&layout)?;
    let mut preds = Vec::with_capacity(ds.len());
    let mut counts = Vec::new();
    for r in 0..ds.len() {
        let out = model.forward(ds.inputs.row(r), &layout, None)?;
        counts.extend_from_slice(&out.iterations);
        preds.push(out.scored().to_vec());
    }
    let targets: Vec<&[f64]> = (0..ds.len()).map(|r| ds.scored_target(r)).collect();
    Ok(Evaluation {
        metrics: MetricSet::compute(&preds, &targets, ds.kind.is_classification())?,
        iterations: IterationStats::from_counts(&counts),
    })
}
