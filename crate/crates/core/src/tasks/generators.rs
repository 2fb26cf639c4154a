// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::dataset::{SegmentIndices, TaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::{sample, streams, DistributionSpec, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithmeticOp {
    Add,
    Sub,
}

/// Everything needed to (re)generate a sampled task at any distribution,
/// with the arithmetic segments pinned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Identity dimension, arithmetic input length or rolling sequence length.
    pub size: usize,
    pub segments: Option<SegmentIndices>,
}

impl TaskSpec {
    /// Default sizes: identity 10, arithmetic 50, rolling tasks 10. Arithmetic
    /// segments are drawn from `seed`.
    pub fn standard(kind: TaskKind, seed: u64) -> Result<Self> {
        let size = match kind {
            TaskKind::Identity | TaskKind::RollingAverage | TaskKind::RollingArgmax => 10,
            TaskKind::Addition | TaskKind::Subtraction => 50,
            TaskKind::Spiky | TaskKind::Series => {
                return Err(Error::Parameter(format!("task '{}' is not a sampled task", kind.name())))
            }
        };
        let segments = match kind {
            TaskKind::Addition | TaskKind::Subtraction => Some(draw_segments(size, seed)?),
            _ => None,
        };
        Ok(Self { kind, size, segments })
    }

    pub fn from_dataset(ds: &TaskDataset) -> Result<Self> {
        let size = match ds.kind {
            TaskKind::Identity | TaskKind::Addition | TaskKind::Subtraction => ds.inputs.cols(),
            TaskKind::RollingAverage | TaskKind::RollingArgmax => ds.steps,
            TaskKind::Spiky | TaskKind::Series => {
                return Err(Error::Parameter(format!("task '{}' is not a sampled task", ds.kind.name())))
            }
        };
        Ok(Self {
            kind: ds.kind,
            size,
            segments: ds.segments,
        })
    }

    pub fn generate(&self, n: usize, dist: &DistributionSpec, seed: u64, stream: u64) -> Result<TaskDataset> {
        let mut rng = RngStream::new(seed, stream);
        match self.kind {
            TaskKind::Identity => identity(n, self.size, dist, seed, &mut rng),
            TaskKind::Addition | TaskKind::Subtraction => {
                let segments = self
                    .segments
                    .ok_or_else(|| Error::Parameter("arithmetic task needs segment indices".into()))?;
                let op = if self.kind == TaskKind::Addition {
                    ArithmeticOp::Add
                } else {
                    ArithmeticOp::Sub
                };
                arithmetic(n, self.size, op, segments, dist, seed, &mut rng)
            }
            TaskKind::RollingAverage => rolling_average(n, self.size, dist, seed, &mut rng),
            TaskKind::RollingArgmax => rolling_argmax(n, self.size, dist, seed, &mut rng),
            TaskKind::Spiky | TaskKind::Series => Err(Error::Parameter(format!(
                "task '{}' is not a sampled task",
                self.kind.name()
            ))),
        }
    }
}

/// Targets equal inputs.
pub fn gen_identity(n: usize, dim: usize, dist: &DistributionSpec, seed: u64) -> Result<TaskDataset> {
    identity(n, dim, dist, seed, &mut RngStream::new(seed, streams::DATA))
}

fn identity(n: usize, dim: usize, dist: &DistributionSpec, seed: u64, rng: &mut RngStream) -> Result<TaskDataset> {
    if dim == 0 {
        return Err(Error::Parameter("identity dimension must be at least 1".into()));
    }
    let inputs = sample(dist, (n, dim), rng)?;
    Ok(TaskDataset {
        kind: TaskKind::Identity,
        targets: inputs.clone(),
        inputs,
        steps: 1,
        target_per_step: false,
        dist: Some(*dist),
        seed,
        segments: None,
        target_start: None,
        layout: None,
    })
}

/// Draws `i < j` and `k < l` uniformly from `1..=len`.
pub fn draw_segments(len: usize, seed: u64) -> Result<SegmentIndices> {
    if len < 2 {
        return Err(Error::Parameter(format!("arithmetic length must be at least 2, got {len}")));
    }
    let mut rng = RngStream::new(seed, streams::SEGMENTS);
    let mut pair = || {
        let a = rng.range(1, len + 1);
        let mut b = rng.range(1, len);
        if b >= a {
            b += 1;
        }
        (a.min(b), a.max(b))
    };
    let (i, j) = pair();
    let (k, l) = pair();
    Ok(SegmentIndices { i, j, k, l })
}

/// `a = Σ_{t=i..=j} u_t`, `b = Σ_{t=k..=l} u_t`, target `a ± b`. Segments are
/// drawn once from `seed`.
pub fn gen_arithmetic(
    n: usize,
    len: usize,
    op: ArithmeticOp,
    dist: &DistributionSpec,
    seed: u64,
) -> Result<TaskDataset> {
    let segments = draw_segments(len, seed)?;
    arithmetic(n, len, op, segments, dist, seed, &mut RngStream::new(seed, streams::DATA))
}

pub(crate) fn arithmetic_target(row: &[f64], s: SegmentIndices, op: ArithmeticOp) -> f64 {
    let a: f64 = row[s.i - 1..s.j].iter().sum();
    let b: f64 = row[s.k - 1..s.l].iter().sum();
    match op {
        ArithmeticOp::Add => a + b,
        ArithmeticOp::Sub => a - b,
    }
}

fn arithmetic(
    n: usize,
    len: usize,
    op: ArithmeticOp,
    segments: SegmentIndices,
    dist: &DistributionSpec,
    seed: u64,
    rng: &mut RngStream,
) -> Result<TaskDataset> {
    let s = segments;
    if len < 2 || !(1 <= s.i && s.i < s.j && s.j <= len && 1 <= s.k && s.k < s.l && s.l <= len) {
        return Err(Error::Parameter(format!("segments {s:?} invalid for length {len}")));
    }
    let inputs = sample(dist, (n, len), rng)?;
    let targets: Vec<f64> = (0..n).map(|r| arithmetic_target(inputs.row(r), s, op)).collect();
    Ok(TaskDataset {
        kind: match op {
            ArithmeticOp::Add => TaskKind::Addition,
            ArithmeticOp::Sub => TaskKind::Subtraction,
        },
        inputs,
        targets: Matrix::from_vec(n, 1, targets)?,
        steps: 1,
        target_per_step: false,
        dist: Some(*dist),
        seed,
        segments: Some(segments),
        target_start: None,
        layout: None,
    })
}

/// `(Σ_{i≤j} u_i) / j` for every prefix.
pub(crate) fn prefix_means(row: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    row.iter()
        .enumerate()
        .map(|(j, &u)| {
            sum += u;
            sum / (j + 1) as f64
        })
        .collect()
}

/// Index of the running maximum at every step, earliest index on ties.
pub(crate) fn running_argmax(row: &[f64]) -> Vec<usize> {
    let mut best = 0;
    (0..row.len())
        .map(|j| {
            if row[j] > row[best] {
                best = j;
            }
            best
        })
        .collect()
}

/// Per-step prefix means.
pub fn gen_rolling_average(n: usize, len: usize, dist: &DistributionSpec, seed: u64) -> Result<TaskDataset> {
    rolling_average(n, len, dist, seed, &mut RngStream::new(seed, streams::DATA))
}

fn rolling_average(n: usize, len: usize, dist: &DistributionSpec, seed: u64, rng: &mut RngStream) -> Result<TaskDataset> {
    if len == 0 {
        return Err(Error::Parameter("sequence length must be at least 1".into()));
    }
    let inputs = sample(dist, (n, len), rng)?;
    let mut targets = Matrix::zeros(n, len);
    for r in 0..n {
        targets.row_mut(r).copy_from_slice(&prefix_means(inputs.row(r)));
    }
    Ok(TaskDataset {
        kind: TaskKind::RollingAverage,
        inputs,
        targets,
        steps: len,
        target_per_step: true,
        dist: Some(*dist),
        seed,
        segments: None,
        target_start: None,
        layout: None,
    })
}

/// Per-step one-hot (length `len`) index of the running maximum; ties go to the
/// earliest index.
pub fn gen_rolling_argmax(n: usize, len: usize, dist: &DistributionSpec, seed: u64) -> Result<TaskDataset> {
    rolling_argmax(n, len, dist, seed, &mut RngStream::new(seed, streams::DATA))
}

fn rolling_argmax(n: usize, len: usize, dist: &DistributionSpec, seed: u64, rng: &mut RngStream) -> Result<TaskDataset> {
    if len < 2 {
        return Err(Error::Parameter(format!("argmax sequence length must be at least 2, got {len}")));
    }
    let inputs = sample(dist, (n, len), rng)?;
    let mut targets = Matrix::zeros(n, len * len);
    for r in 0..n {
        for (j, best) in running_argmax(inputs.row(r)).into_iter().enumerate() {
            targets.set(r, j * len + best, 1.0);
        }
    }
    Ok(TaskDataset {
        kind: TaskKind::RollingArgmax,
        inputs,
        targets,
        steps: len,
        target_per_step: true,
        dist: Some(*dist),
        seed,
        segments: None,
        target_start: None,
        layout: None,
    })
}
