// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::dataset::{TaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::{streams, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikyConfig {
    pub train_n: usize,
    pub test_n: usize,
    /// Spiky regions in the training series; the test series gets a proportionate count.
    pub regions: usize,
    pub region_len: usize,
    /// Spacing of the x grid, `x_t = t · x_step`. The test series continues the grid.
    pub x_step: f64,
    /// Standard deviation of the additive noise outside spiky regions (variance 0.25).
    pub noise_std: f64,
}

impl Default for SpikyConfig {
    fn default() -> Self {
        Self {
            train_n: 7000,
            test_n: 3000,
            regions: 20,
            region_len: 100,
            x_step: 0.01,
            noise_std: 0.5,
        }
    }
}

impl SpikyConfig {
    pub fn test_regions(&self) -> usize {
        (self.regions as f64 * self.test_n as f64 / self.train_n as f64).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikyLayout {
    pub region_len: usize,
    /// Region start offsets within the training series.
    pub train_regions: Vec<usize>,
    /// Region start offsets within the test series.
    pub test_regions: Vec<usize>,
    pub x_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikySeries {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    pub layout: SpikyLayout,
}

/// `5 (sin 2x + sin 23x + sin 78x + sin 100x)`, bounded by 20 in magnitude.
pub fn spike_value(x: f64) -> f64 {
    5.0 * ((2.0 * x).sin() + (23.0 * x).sin() + (78.0 * x).sin() + (100.0 * x).sin())
}

/// Uniformly random non-overlapping placement of `count` regions of length
/// `len` in `0..n`: sorted gap draws plus cumulative offsets.
fn place_regions(n: usize, count: usize, len: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    let occupied = count
        .checked_mul(len)
        .filter(|&o| o <= n)
        .ok_or_else(|| Error::Parameter(format!("{count} regions of length {len} do not fit in {n} points")))?;
    let free = n - occupied;
    let mut gaps: Vec<usize> = (0..count).map(|_| rng.range(0, free + 1)).collect();
    gaps.sort_unstable();
    Ok(gaps.iter().enumerate().map(|(i, g)| g + i * len).collect())
}

fn fill_series(
    offset: usize,
    n: usize,
    regions: &[usize],
    cfg: &SpikyConfig,
    rng: &mut RngStream,
) -> Vec<f64> {
    let mut in_region = vec![false; n];
    for &s in regions {
        in_region[s..s + cfg.region_len].iter_mut().for_each(|b| *b = true);
    }
    (0..n)
        .map(|t| {
            let x = (offset + t) as f64 * cfg.x_step;
            // Noise is drawn for every point so the stream position does not depend on the layout.
            let noise = cfg.noise_std * rng.standard_normal();
            if in_region[t] {
                spike_value(x)
            } else {
                x.sin() + noise
            }
        })
        .collect()
}

/// Train and test series of a sine wave with noise, interrupted by spiky regions.
pub fn gen_spiky(cfg: &SpikyConfig, seed: u64) -> Result<SpikySeries> {
    if cfg.train_n == 0 || cfg.test_n == 0 || cfg.region_len == 0 {
        return Err(Error::Parameter("series lengths and region length must be positive".into()));
    }
    if !(cfg.x_step > 0.0) || !(cfg.noise_std >= 0.0) {
        return Err(Error::Parameter("x_step must be positive and noise_std non-negative".into()));
    }
    let mut layout_rng = RngStream::new(seed, streams::LAYOUT);
    let train_regions = place_regions(cfg.train_n, cfg.regions, cfg.region_len, &mut layout_rng)?;
    let test_regions = place_regions(cfg.test_n, cfg.test_regions(), cfg.region_len, &mut layout_rng)?;
    let mut rng = RngStream::new(seed, streams::DATA);
    let train = fill_series(0, cfg.train_n, &train_regions, cfg, &mut rng);
    let test = fill_series(cfg.train_n, cfg.test_n, &test_regions, cfg, &mut rng);
    Ok(SpikySeries {
        train,
        test,
        layout: SpikyLayout {
            region_len: cfg.region_len,
            train_regions,
            test_regions,
            x_step: cfg.x_step,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStat {
    /// The next `horizon` values.
    NextValue,
    /// Population variance of the next `horizon` values.
    Variance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesWindowSpec {
    pub window: usize,
    pub horizon: usize,
    pub target_stat: TargetStat,
}

fn variance(values: &[f64]) -> f64 {
    // Welford.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    m2 / values.len() as f64
}

/// Sliding windows of `window` inputs followed by a `horizon`-long target span.
/// Inputs are laid out as a `window`-step sequence of scalars.
pub fn window_series(series: &[f64], spec: &SeriesWindowSpec, kind: TaskKind) -> Result<TaskDataset> {
    if spec.window == 0 || spec.horizon == 0 {
        return Err(Error::Parameter("window and horizon must be at least 1".into()));
    }
    if series.len() < spec.window + spec.horizon {
        return Err(Error::Parameter(format!(
            "series of length {} is shorter than window {} + horizon {}",
            series.len(),
            spec.window,
            spec.horizon
        )));
    }
    let count = series.len() - spec.window - spec.horizon + 1;
    let target_cols = match spec.target_stat {
        TargetStat::NextValue => spec.horizon,
        TargetStat::Variance => 1,
    };
    let mut inputs = Vec::with_capacity(count * spec.window);
    let mut targets = Vec::with_capacity(count * target_cols);
    let mut target_start = Vec::with_capacity(count);
    for s in 0..count {
        let t0 = s + spec.window;
        let span = &series[t0..t0 + spec.horizon];
        inputs.extend_from_slice(&series[s..t0]);
        match spec.target_stat {
            TargetStat::NextValue => targets.extend_from_slice(span),
            TargetStat::Variance => targets.push(variance(span)),
        }
        target_start.push(t0);
    }
    Ok(TaskDataset {
        kind,
        inputs: Matrix::from_vec(count, spec.window, inputs)?,
        targets: Matrix::from_vec(count, target_cols, targets)?,
        steps: spec.window,
        target_per_step: false,
        dist: None,
        seed: 0,
        segments: None,
        target_start: Some(target_start),
        layout: None,
    })
}

/// Splits a windowed dataset at a time index: training windows have their whole
/// target span before `cutoff`, validation windows start their target at or after it.
pub fn chronological_split(ds: &TaskDataset, cutoff: usize, horizon: usize) -> Result<(TaskDataset, TaskDataset)> {
    let starts = ds
        .target_start
        .as_ref()
        .ok_or_else(|| Error::Usage("chronological split needs a windowed dataset".into()))?;
    let train: Vec<usize> = (0..ds.len()).filter(|&i| starts[i] + horizon <= cutoff).collect();
    let val: Vec<usize> = (0..ds.len()).filter(|&i| starts[i] >= cutoff).collect();
    Ok((ds.subset(&train)?, ds.subset(&val)?))
}
