// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::metrics::IterationStats;
use super::model::{DataLayout, LossSteps, Model, ModelKind, ModelSpec, SampleGradient};
use super::optim::{Optimizer, OptimizerConfig};
use crate::equilibrium::SolverSettings;
use crate::error::{Error, Result};
use crate::numerics::{streams, Matrix, RngStream};
use crate::tasks::TaskDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Seeds model initialization and minibatch shuffling.
    pub seed: u64,
    pub loss: LossKind,
    pub loss_steps: LossSteps,
    pub feedback: bool,
    pub norm_bound: f64,
    pub max_iterations: usize,
    pub epsilon: f64,
    /// Start each sample's forward solve from its equilibrium in the previous epoch.
    pub warm_start: bool,
    /// Per-sample gradients of a batch run on the rayon pool. The reduction is
    /// still in sample order, so results match the serial path bitwise.
    pub parallel: bool,
    /// Reduce gradients in whatever order the pool finishes. Not bit-reproducible.
    pub fast_reduction: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let solver = SolverSettings::default();
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            loss: LossKind::Mse,
            loss_steps: LossSteps::All,
            feedback: true,
            norm_bound: solver.norm_bound,
            max_iterations: solver.max_iterations,
            epsilon: solver.epsilon,
            warm_start: false,
            parallel: false,
            fast_reduction: false,
        }
    }
}

impl TrainConfig {
    /// `learning_rate` may be zero (a no-op run); negative or non-finite rates are rejected.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.solver().validate()
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            norm_bound: self.norm_bound,
            ..SolverSettings::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub mean_iterations: Option<f64>,
    pub median_iterations: Option<f64>,
    pub max_iterations: Option<usize>,
    /// `‖A‖_∞` at the end of the epoch, for models with an equilibrium core.
    pub a_inf_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_kind: ModelKind,
    pub parameter_count: usize,
    pub samples: usize,
    pub epochs: Vec<EpochRecord>,
    pub wall_time_secs: f64,
    /// Where the final model was saved, when it was.
    pub checkpoint: Option<String>,
    pub config: TrainConfig,
    pub seed: u64,
}

/// Builds a model for `dataset` from `spec` and trains it. The solver settings and
/// feedback flag of the config take precedence over the ones in `spec`.
pub fn train(spec: &ModelSpec, dataset: &TaskDataset, config: &TrainConfig) -> Result<(Model, RunRecord)> {
    train_observed(spec, dataset, config, &mut |_, _| Ok(()))
}

/// [`train`] with a callback after every epoch.
pub fn train_observed(
    spec: &ModelSpec,
    dataset: &TaskDataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Model) -> Result<()>,
) -> Result<(Model, RunRecord)> {
    config.validate()?;
    dataset.validate()?;
    let spec = ModelSpec {
        solver: config.solver(),
        feedback: config.feedback,
        ..spec.clone()
    };
    let layout = DataLayout::of(dataset);
    let mut model = Model::build(&spec, &layout, config.loss_steps, config.seed)?;
    let record = train_model(&mut model, dataset, config, on_epoch)?;
    Ok((model, record))
}

fn sum_grads(mut acc: Vec<Matrix>, g: &[Matrix]) -> Vec<Matrix> {
    for (a, b) in acc.iter_mut().zip(g) {
        a.axpy(1.0, b).expect("per-sample gradients share shapes");
    }
    acc
}

/// Trains an existing model in place.
pub fn train_model(
    model: &mut Model,
    dataset: &TaskDataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Model) -> Result<()>,
) -> Result<RunRecord> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("cannot train on an empty dataset".into()));
    }
    let layout = DataLayout::of(dataset);
    model.check_layout(&layout)?;
    let start = Instant::now();
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = RngStream::new(config.seed, streams::SHUFFLE);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let warm = config.warm_start && matches!(model, Model::Implicit(_));
    let mut states: Vec<Option<Vec<f64>>> = vec![None; if warm { n } else { 0 }];
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut counts = Vec::new();
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let context = |e: Error| match e {
                Error::NonConvergence(msg) => Error::NonConvergence(format!("epoch {epoch}, batch {}: {msg}", b + 1)),
                Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {}: {msg}", b + 1)),
                other => other,
            };
            let current: &Model = model;
            let one = |&r: &usize| -> Result<SampleGradient> {
                let x0 = if warm { states[r].as_deref() } else { None };
                current.sample_gradient(
                    dataset.inputs.row(r),
                    dataset.targets.row(r),
                    &layout,
                    config.loss,
                    config.loss_steps,
                    x0,
                )
            };
            let results: Vec<SampleGradient> = if config.parallel {
                batch.par_iter().map(one).collect::<Result<_>>()
            } else {
                batch.iter().map(one).collect::<Result<_>>()
            }
            .map_err(context)?;

            let mut batch_loss = 0.0;
            for s in &results {
                batch_loss += s.loss;
                counts.extend_from_slice(&s.iterations);
            }
            if !batch_loss.is_finite() {
                return Err(context(Error::Numeric("training loss is not finite".into())));
            }
            loss_sum += batch_loss;
            let grads = if config.parallel && config.fast_reduction {
                results
                    .par_iter()
                    .map(|s| s.grads.clone())
                    .reduce_with(|a, b| sum_grads(a, &b))
                    .expect("non-empty batch")
            } else {
                let mut it = results.iter();
                let first = it.next().expect("non-empty batch").grads.clone();
                it.fold(first, |acc, s| sum_grads(acc, &s.grads))
            };
            let grads: Vec<Matrix> = grads
                .into_iter()
                .map(|g| g.scale(1.0 / batch.len() as f64))
                .collect::<Result<_>>()
                .map_err(context)?;
            if warm {
                for (&r, s) in batch.iter().zip(results) {
                    states[r] = s.state;
                }
            }
            optimizer.step(model.parameters_mut(), &grads).map_err(context)?;
            model.apply_constraints();
        }
        let stats = IterationStats::from_counts(&counts);
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            mean_iterations: stats.map(|s| s.mean),
            median_iterations: stats.map(|s| s.median),
            max_iterations: stats.map(|s| s.max),
            a_inf_norm: model.implicit_core().map(|c| c.a().inf_operator_norm()),
        };
        on_epoch(&rec, model)?;
        epochs.push(rec);
    }
    Ok(RunRecord {
        model_kind: model.kind(),
        parameter_count: model.parameter_count(),
        samples: n,
        epochs,
        wall_time_secs: start.elapsed().as_secs_f64(),
        checkpoint: None,
        config: config.clone(),
        seed: config.seed,
    })
}
