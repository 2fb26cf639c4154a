// SPDX-License-Identifier: Apache-2.0

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::series::SpikyLayout;
use crate::error::{Error, Result};
use crate::numerics::{DistributionSpec, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Identity,
    Addition,
    Subtraction,
    RollingAverage,
    RollingArgmax,
    /// Windows over a generated spiky series.
    Spiky,
    /// Windows over a user-supplied series.
    Series,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Identity => "identity",
            TaskKind::Addition => "add",
            TaskKind::Subtraction => "sub",
            TaskKind::RollingAverage => "rolling-average",
            TaskKind::RollingArgmax => "rolling-argmax",
            TaskKind::Spiky => "spiky",
            TaskKind::Series => "series",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => TaskKind::Identity,
            "add" | "addition" => TaskKind::Addition,
            "sub" | "subtraction" => TaskKind::Subtraction,
            "rolling-average" | "rolling_average" | "rolling-avg" => TaskKind::RollingAverage,
            "rolling-argmax" | "rolling_argmax" => TaskKind::RollingArgmax,
            "spiky" => TaskKind::Spiky,
            "series" => TaskKind::Series,
            other => {
                return Err(Error::Unknown {
                    what: "task",
                    name: other.to_string(),
                })
            }
        })
    }

    pub fn is_classification(self) -> bool {
        self == TaskKind::RollingArgmax
    }

    /// Whether the task's test distribution can be regenerated at a shift κ.
    pub fn supports_shift(self) -> bool {
        !matches!(self, TaskKind::Spiky | TaskKind::Series)
    }

    /// In-distribution training inputs.
    pub fn train_distribution(self) -> Result<DistributionSpec> {
        match self {
            TaskKind::Identity => DistributionSpec::uniform(-5.0, 5.0),
            TaskKind::Addition | TaskKind::Subtraction => DistributionSpec::uniform(-1.0, 1.0),
            TaskKind::RollingAverage => DistributionSpec::normal(3.0, 1.0),
            TaskKind::RollingArgmax => DistributionSpec::uniform(0.0, 1.0),
            TaskKind::Spiky | TaskKind::Series => Err(Error::Parameter(format!(
                "task '{}' has no sampling distribution",
                self.name()
            ))),
        }
    }

    /// Shifted test inputs at κ. κ = 0 is the training distribution.
    ///
    /// | task | κ > 0 |
    /// |---|---|
    /// | identity | `U(−κ, κ)` |
    /// | add / sub | `U(−κ/2, κ/2)` |
    /// | rolling average | `N(3 + κ, 1)` |
    /// | rolling argmax | `U(0, κ)` |
    pub fn test_distribution(self, kappa: f64) -> Result<DistributionSpec> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Parameter(format!("shift must be finite and >= 0, got {kappa}")));
        }
        if kappa == 0.0 {
            return self.train_distribution();
        }
        let spec = match self {
            TaskKind::Identity => DistributionSpec::uniform(-kappa, kappa)?,
            TaskKind::Addition | TaskKind::Subtraction => DistributionSpec::uniform(-kappa / 2.0, kappa / 2.0)?,
            TaskKind::RollingAverage => DistributionSpec::normal(3.0 + kappa, 1.0)?,
            TaskKind::RollingArgmax => DistributionSpec::uniform(0.0, kappa)?,
            TaskKind::Spiky | TaskKind::Series => {
                return Err(Error::Parameter(format!(
                    "task '{}' does not support distribution shift",
                    self.name()
                )))
            }
        };
        spec.with_shift(kappa)
    }
}

/// Inclusive, 1-based segment bounds `i < j`, `k < l` for the arithmetic task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentIndices {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
}

/// Inputs and targets of one dataset plus the metadata needed to regenerate it.
///
/// Sequence tasks store each sample step-major: `steps` input blocks per row and,
/// when `target_per_step` is set, `steps` target blocks per row (otherwise a
/// single block attached to the final step).
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub kind: TaskKind,
    pub inputs: Matrix,
    pub targets: Matrix,
    pub steps: usize,
    pub target_per_step: bool,
    pub dist: Option<DistributionSpec>,
    pub seed: u64,
    pub segments: Option<SegmentIndices>,
    /// First target index in the source series, for windowed datasets.
    pub target_start: Option<Vec<usize>>,
    pub layout: Option<SpikyLayout>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    task_kind: TaskKind,
    samples: usize,
    input_cols: usize,
    target_cols: usize,
    steps: usize,
    target_per_step: bool,
    dist: Option<DistributionSpec>,
    seed: u64,
    segment_indices: Option<SegmentIndices>,
    target_start: Option<Vec<usize>>,
    layout: Option<SpikyLayout>,
}

const SIDECAR_VERSION: u32 = 1;

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn step_input_dim(&self) -> usize {
        self.inputs.cols() / self.steps
    }

    /// Width of one target block.
    pub fn step_target_dim(&self) -> usize {
        if self.target_per_step {
            self.targets.cols() / self.steps
        } else {
            self.targets.cols()
        }
    }

    /// Number of target blocks per sample.
    pub fn target_blocks(&self) -> usize {
        if self.target_per_step {
            self.steps
        } else {
            1
        }
    }

    /// The scored (final-step) target block of sample `r`.
    pub fn scored_target(&self, r: usize) -> &[f64] {
        let row = self.targets.row(r);
        &row[row.len() - self.step_target_dim()..]
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.inputs.cols() % self.steps != 0 {
            return Err(Error::Dimension(format!(
                "{} input columns do not split into {} steps",
                self.inputs.cols(),
                self.steps
            )));
        }
        if self.target_per_step && self.targets.cols() % self.steps != 0 {
            return Err(Error::Dimension(format!(
                "{} target columns do not split into {} steps",
                self.targets.cols(),
                self.steps
            )));
        }
        if self.inputs.rows() != self.targets.rows() {
            return Err(Error::Dimension(format!(
                "{} input rows but {} target rows",
                self.inputs.rows(),
                self.targets.rows()
            )));
        }
        if let Some(ts) = &self.target_start {
            if ts.len() != self.len() {
                return Err(Error::Dimension("target_start length differs from sample count".into()));
            }
        }
        Ok(())
    }

    /// Rows selected by `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<TaskDataset> {
        let pick = |m: &Matrix| -> Result<Matrix> {
            let mut data = Vec::with_capacity(indices.len() * m.cols());
            for &i in indices {
                if i >= m.rows() {
                    return Err(Error::Parameter(format!("row {i} out of range {}", m.rows())));
                }
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(indices.len(), m.cols(), data)
        };
        Ok(TaskDataset {
            inputs: pick(&self.inputs)?,
            targets: pick(&self.targets)?,
            target_start: self
                .target_start
                .as_ref()
                .map(|ts| indices.iter().map(|&i| ts[i]).collect()),
            ..self.clone()
        })
    }

    /// Writes `inputs.bin`, `targets.bin` and the `dataset.json` sidecar into `dir`.
    /// Output is a pure function of the dataset, so regenerated datasets are byte-identical.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (name, m) in [("inputs.bin", &self.inputs), ("targets.bin", &self.targets)] {
            let path = dir.join(name);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(f);
            m.write_binary(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        let sidecar = Sidecar {
            format_version: SIDECAR_VERSION,
            task_kind: self.kind,
            samples: self.len(),
            input_cols: self.inputs.cols(),
            target_cols: self.targets.cols(),
            steps: self.steps,
            target_per_step: self.target_per_step,
            dist: self.dist,
            seed: self.seed,
            segment_indices: self.segments,
            target_start: self.target_start.clone(),
            layout: self.layout.clone(),
        };
        let path = dir.join("dataset.json");
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<TaskDataset> {
        let path = dir.join("dataset.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        if sidecar.format_version != SIDECAR_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset format version {}",
                sidecar.format_version
            )));
        }
        let read = |name: &str| -> Result<Matrix> {
            let path = dir.join(name);
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            Matrix::read_binary(&mut BufReader::new(f))
        };
        let ds = TaskDataset {
            kind: sidecar.task_kind,
            inputs: read("inputs.bin")?,
            targets: read("targets.bin")?,
            steps: sidecar.steps,
            target_per_step: sidecar.target_per_step,
            dist: sidecar.dist,
            seed: sidecar.seed,
            segments: sidecar.segment_indices,
            target_start: sidecar.target_start,
            layout: sidecar.layout,
        };
        if ds.len() != sidecar.samples
            || ds.inputs.cols() != sidecar.input_cols
            || ds.targets.cols() != sidecar.target_cols
        {
            return Err(Error::Format("dataset matrices disagree with dataset.json".into()));
        }
        ds.validate()?;
        Ok(ds)
    }
}
