// SPDX-License-Identifier: Apache-2.0

//! Training, evaluation, distribution-shift sweeps, the feedback ablation,
//! gradient checking and cross-validation folds.

mod gradcheck;
mod kfold;
mod loss;
mod metrics;
mod model;
mod optim;
mod sweep;
mod train;

pub use gradcheck::{gradcheck, relative_error, GradcheckReport, WorstEntry, FD_STEP, KINK_MARGIN, RELATIVE_FLOOR};
pub use kfold::{kfold_split, Fold};
pub use loss::{argmax, softmax, LossKind};
pub use metrics::{evaluate, Evaluation, IterationStats, Metric, MetricSet, MAPE_EXCLUSION};
pub use model::{DataLayout, LossSteps, Model, ModelKind, ModelSpec, SampleGradient, SampleOutput};
pub use optim::{Optimizer, OptimizerConfig};
pub use sweep::{
    ablation_run, shifted_test_set, sweep, AblationReport, AblationSetup, ComparisonRow, SweepReport, SweepRow,
};
pub use train::{train, train_model, train_observed, EpochRecord, RunRecord, TrainConfig};
