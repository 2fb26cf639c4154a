// SPDX-License-Identifier: Apache-2.0

//! Dense linear algebra, norms, the ∞-norm-ball projection and seeded sampling.

mod matrix;
mod random;

pub use matrix::{dot, inf_norm, inf_norm_diff, Matrix};
pub use random::{sample, streams, DistributionSpec, Family, RngStream};
