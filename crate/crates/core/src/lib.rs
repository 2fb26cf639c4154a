// SPDX-License-Identifier: Apache-2.0

//! Implicit deep learning: equilibrium models solved by fixed-point iteration
//! and trained through implicit differentiation, an implicit recurrent variant,
//! explicit baselines, benchmark task generators and an extrapolation harness.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod sequence;
pub mod tasks;

pub use error::{Error, Result};
