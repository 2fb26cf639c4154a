// SPDX-License-Identifier: Apache-2.0

//! The implicit model `ŷ = C x + D u`, `x = φ(A x + B u)`: well-posedness
//! constraints, the fixed-point forward solve and the adjoint backward pass.

mod model;
mod solve;

pub use model::{Activation, ImplicitDims, ImplicitModel, SolverSettings};
pub use solve::{activation_derivative_mask, Backward, EquilibriumSolution, GradientSet};
