// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, IterationStats, MetricSet};
use super::model::{Model, ModelKind, ModelSpec};
use super::train::{train_observed, RunRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::streams;
use crate::tasks::{TaskDataset, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub distribution: String,
    pub metrics: MetricSet,
    pub iterations: Option<IterationStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model_kind: ModelKind,
    pub parameter_count: usize,
    pub init_seed: Option<u64>,
    pub task: TaskSpec,
    pub test_seed: u64,
    pub test_samples: usize,
    pub rows: Vec<SweepRow>,
}

/// Test set for shift `kappa`; `kappa = 0` is the training distribution.
pub fn shifted_test_set(task: &TaskSpec, kappa: f64, seed: u64, n: usize) -> Result<TaskDataset> {
    let dist = task.kind.test_distribution(kappa)?;
    task.generate(n, &dist, seed, streams::TEST_DATA)
}

/// Evaluates `model` on a freshly generated test set per shift.
pub fn sweep(model: &Model, task: &TaskSpec, shifts: &[f64], seed: u64, n_test: usize) -> Result<SweepReport> {
    if shifts.is_empty() {
        return Err(Error::Parameter("shift list is empty".into()));
    }
    if shifts.windows(2).any(|w| !(w[0] < w[1])) || shifts.iter().any(|k| !(*k >= 0.0)) {
        return Err(Error::Parameter(format!(
            "shifts must be non-negative and strictly increasing, got {shifts:?}"
        )));
    }
    let mut rows = Vec::with_capacity(shifts.len());
    for &kappa in shifts {
        let ds = shifted_test_set(task, kappa, seed, n_test)?;
        let ev = evaluate(model, &ds)?;
        rows.push(SweepRow {
            kappa,
            distribution: ds.dist.map(|d| d.to_string()).unwrap_or_default(),
            metrics: ev.metrics,
            iterations: ev.iterations,
        });
    }
    Ok(SweepReport {
        model_kind: model.kind(),
        parameter_count: model.parameter_count(),
        init_seed: model.implicit_core().and_then(|c| c.init_seed()),
        task: *task,
        test_seed: seed,
        test_samples: n_test,
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl SweepReport {
    pub const CSV_HEADER: &'static str =
        "kappa,distribution,mse,log_mse,rmse,mape,mape_excluded,accuracy,iter_mean,iter_median,iter_p95,iter_max";

    /// One row per shift with a fixed column set; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let it = r.iterations;
            out.push_str(&format!(
                "{:?},\"{}\",{:?},{:?},{:?},{},{},{},{},{},{},{}\n",
                r.kappa,
                r.distribution,
                m.mse,
                m.log_mse,
                m.rmse,
                opt(m.mape),
                m.mape_excluded,
                opt(m.accuracy),
                opt(it.map(|s| s.mean)),
                opt(it.map(|s| s.median)),
                opt(it.map(|s| s.p95)),
                it.map(|s| s.max.to_string()).unwrap_or_default(),
            ));
        }
        out
    }
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,mean_iterations,median_iterations,max_iterations,a_inf_norm";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                opt(e.mean_iterations),
                opt(e.median_iterations),
                e.max_iterations.map(|m| m.to_string()).unwrap_or_default(),
                opt(e.a_inf_norm),
            ));
        }
        out
    }
}

/// What an ablation trains and where it tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSetup {
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub train_samples: usize,
    pub test_samples: usize,
    pub shifts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kappa: f64,
    /// `accuracy` for classification tasks, `mse` otherwise.
    pub metric: String,
    pub with_feedback: f64,
    pub without_feedback: f64,
    pub feedback_better: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub with_feedback: SweepReport,
    pub without_feedback: SweepReport,
    pub runs: [RunRecord; 2],
    pub comparison: Vec<ComparisonRow>,
    /// Top-level config fields that differ between the two runs.
    pub config_diff: Vec<String>,
}

impl AblationReport {
    pub const CSV_HEADER: &'static str = "kappa,metric,with_feedback,without_feedback,feedback_better";

    pub fn comparison_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.comparison {
            out.push_str(&format!(
                "{:?},{},{:?},{:?},{}\n",
                r.kappa, r.metric, r.with_feedback, r.without_feedback, r.feedback_better
            ));
        }
        out
    }
}

fn config_diff(a: &TrainConfig, b: &TrainConfig) -> Result<Vec<String>> {
    let va = serde_json::to_value(a)?;
    let vb = serde_json::to_value(b)?;
    let (Some(ma), Some(mb)) = (va.as_object(), vb.as_object()) else {
        return Err(Error::Format("config did not serialize to an object".into()));
    };
    Ok(ma
        .iter()
        .filter(|(k, v)| mb.get(k.as_str()) != Some(v))
        .map(|(k, _)| k.clone())
        .collect())
}

/// Trains the same architecture on the same data from the same seed with and
/// without feedback and sweeps both. The no-feedback run is checked for a zero
/// lower triangle after every epoch and for at most `n` forward iterations.
pub fn ablation_run(setup: &AblationSetup, config: &TrainConfig, seed: u64) -> Result<AblationReport> {
    let train_set = setup
        .task
        .generate(setup.train_samples, &setup.task.kind.train_distribution()?, seed, streams::DATA)?;
    let base = TrainConfig { seed, ..config.clone() };
    let mut models = Vec::with_capacity(2);
    let mut runs = Vec::with_capacity(2);
    let mut configs = Vec::with_capacity(2);
    for feedback in [true, false] {
        let cfg = TrainConfig { feedback, ..base.clone() };
        let (model, run) = train_observed(&setup.model, &train_set, &cfg, &mut |rec, m| {
            if !feedback {
                let core = m.implicit_core().ok_or_else(|| {
                    Error::Usage("the feedback ablation needs a model with an equilibrium core".into())
                })?;
                if !core.a().is_strictly_upper() {
                    return Err(Error::Numeric(format!(
                        "epoch {}: lower triangle of A is not zero without feedback",
                        rec.epoch
                    )));
                }
            }
            Ok(())
        })?;
        models.push(model);
        runs.push(run);
        configs.push(cfg);
    }
    let with = sweep(&models[0], &setup.task, &setup.shifts, seed, setup.test_samples)?;
    let without = sweep(&models[1], &setup.task, &setup.shifts, seed, setup.test_samples)?;
    let n = models[1].implicit_core().map_or(0, |c| c.dims().n);
    for row in &without.rows {
        if let Some(it) = row.iterations {
            if it.max > n {
                return Err(Error::Numeric(format!(
                    "no-feedback forward took {} iterations at shift {} with n = {n}",
                    it.max, row.kappa
                )));
            }
        }
    }
    let classification = setup.task.kind.is_classification();
    let comparison = with
        .rows
        .iter()
        .zip(&without.rows)
        .map(|(a, b)| {
            let (metric, x, y, better) = if classification {
                let (x, y) = (a.metrics.accuracy.unwrap_or(0.0), b.metrics.accuracy.unwrap_or(0.0));
                ("accuracy", x, y, x > y)
            } else {
                ("mse", a.metrics.mse, b.metrics.mse, a.metrics.mse < b.metrics.mse)
            };
            ComparisonRow {
                kappa: a.kappa,
                metric: metric.to_string(),
                with_feedback: x,
                without_feedback: y,
                feedback_better: better,
            }
        })
        .collect();
    let config_diff = config_diff(&configs[0], &configs[1])?;
    let runs: [RunRecord; 2] = runs.try_into().expect("two runs");
    Ok(AblationReport {
        seed,
        with_feedback: with,
        without_feedback: without,
        runs,
        comparison,
        config_diff,
    })
}
