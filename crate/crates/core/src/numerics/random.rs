// SPDX-License-Identifier: Apache-2.0

//! Seeded sampling. Every draw in the crate goes through an [`RngStream`], a
//! ChaCha20 generator keyed by the seed and positioned on an explicit stream id,
//! so that data generation, initialization and shuffling never share state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Well-known stream ids.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TEST_DATA: u64 = 4;
    pub const SEGMENTS: u64 = 5;
    pub const FOLDS: u64 = 6;
    pub const LAYOUT: u64 = 7;
    pub const GRADCHECK: u64 = 8;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `lo..hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..hi)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    pub fn standard_normal(&mut self) -> f64 {
        rand_distr::StandardNormal.sample(&mut self.rng)
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
}

/// A sampling distribution together with the shift κ it was derived with
/// (0 for training data). `shift` is bookkeeping; sampling reads `family`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub shift: f64,
}

impl DistributionSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::Uniform { lo, hi }, 0.0)
    }

    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        Self::new(Family::Normal { mean, std }, 0.0)
    }

    pub fn new(family: Family, shift: f64) -> Result<Self> {
        let spec = Self { family, shift };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_shift(mut self, shift: f64) -> Result<Self> {
        self.shift = shift;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift >= 0.0) || !self.shift.is_finite() {
            return Err(Error::Parameter(format!(
                "shift must be finite and non-negative, got {}",
                self.shift
            )));
        }
        match self.family {
            Family::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            Family::Uniform { lo, hi } => Err(Error::Parameter(format!(
                "uniform({lo}, {hi}) requires finite lo < hi"
            ))),
            Family::Normal { mean, std } if mean.is_finite() && std.is_finite() && std > 0.0 => {
                Ok(())
            }
            Family::Normal { mean, std } => Err(Error::Parameter(format!(
                "normal({mean}, {std}) requires finite mean and std > 0"
            ))),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Normal { mean, .. } => mean,
        }
    }
}

impl std::fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.family {
            Family::Uniform { lo, hi } => write!(f, "U({lo}, {hi})"),
            Family::Normal { mean, std } => write!(f, "N({mean}, {std})"),
        }
    }
}

/// Fills a `rows × cols` matrix with i.i.d. draws, row-major.
pub fn sample(dist: &DistributionSpec, shape: (usize, usize), rng: &mut RngStream) -> Result<Matrix> {
    dist.validate()?;
    let n = shape.0 * shape.1;
    let data: Vec<f64> = match dist.family {
        Family::Uniform { lo, hi } => {
            // `Uniform::new` is half-open; `new_inclusive` keeps hi reachable as the spec'd range is closed.
            let u = Uniform::new_inclusive(lo, hi)
                .map_err(|e| Error::Parameter(format!("uniform({lo}, {hi}): {e}")))?;
            (0..n).map(|_| u.sample(rng.inner())).collect()
        }
        Family::Normal { mean, std } => {
            let d = Normal::new(mean, std)
                .map_err(|e| Error::Parameter(format!("normal({mean}, {std}): {e}")))?;
            (0..n).map(|_| d.sample(rng.inner())).collect()
        }
    };
    Matrix::from_vec(shape.0, shape.1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stays_in_range() {
        let d = DistributionSpec::uniform(-5.0, 5.0).unwrap();
        let m = sample(&d, (10_000, 10), &mut RngStream::new(3, streams::DATA)).unwrap();
        assert_eq!(m.shape(), (10_000, 10));
        assert!(m.as_slice().iter().all(|v| (-5.0..=5.0).contains(v)));
    }

    #[test]
    fn single_draw_is_reproducible() {
        let d = DistributionSpec::uniform(0.0, 1.0).unwrap();
        let a = sample(&d, (1, 1), &mut RngStream::new(42, 0)).unwrap();
        let b = sample(&d, (1, 1), &mut RngStream::new(42, 0)).unwrap();
        assert_eq!(a.as_slice()[0].to_bits(), b.as_slice()[0].to_bits());
        let c = sample(&d, (1, 1), &mut RngStream::new(42, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn normal_sample_mean() {
        let d = DistributionSpec::normal(3.0, 1.0).unwrap();
        let m = sample(&d, (1000, 1000), &mut RngStream::new(5, streams::DATA)).unwrap();
        let mean = m.as_slice().iter().sum::<f64>() / 1e6;
        assert!((mean - 3.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DistributionSpec::uniform(1.0, 1.0).is_err());
        assert!(DistributionSpec::uniform(2.0, 1.0).is_err());
        assert!(DistributionSpec::normal(0.0, 0.0).is_err());
        assert!(DistributionSpec::normal(0.0, -1.0).is_err());
        let bad = DistributionSpec {
            family: Family::Normal { mean: 0.0, std: -2.0 },
            shift: 0.0,
        };
        assert!(matches!(
            sample(&bad, (1, 1), &mut RngStream::new(0, 0)),
            Err(Error::Parameter(_))
        ));
    }

    /// Frozen first draws: pins the generator so a dependency upgrade that
    /// changes the stream is caught.
    #[test]
    fn stream_is_pinned() {
        let mut a = RngStream::new(7, streams::DATA);
        assert_eq!(a.next_f64().to_bits(), 0x3fd9_75c2_f6fc_929a);
        assert_eq!(a.next_f64().to_bits(), 0x3fcc_dcc7_1335_9fe4);
    }
}
