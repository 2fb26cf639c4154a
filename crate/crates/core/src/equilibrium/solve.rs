// SPDX-License-Identifier: Apache-2.0

//! Forward fixed-point iteration and the implicit (adjoint) backward pass.
//!
//! At an equilibrium `x = φ(z)`, `z = A x + B u`, differentiating gives
//! `dx = Φ (A dx + dA x + dB u)` with `Φ = diag(φ'(z))`, so for a loss with
//! `g = Cᵀ ∂L/∂ŷ` the sensitivities route through `(I − ΦA)⁻ᵀ`. Rather than
//! forming that inverse we iterate the adjoint equation `w = AᵀΦ w + g`. That map
//! contracts in the ℓ1 norm, `‖AᵀΦ‖₁ = ‖ΦA‖_∞ ≤ ‖A‖_∞ < 1`, so its steps are
//! measured in ℓ1 and compared against `ε · max(1, ‖g‖₁)`; the ∞-norm of the
//! iterates may grow before it shrinks. With `v = Φ w` the parameter gradients
//! are rank-one outer products.

use serde::{Deserialize, Serialize};

use super::ImplicitModel;
use crate::error::{Error, Result};
use crate::numerics::{inf_norm_diff, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub x: Vec<f64>,
    /// `z = A x_{t−1} + B u`, the pre-activation that produced the returned `x`.
    pub pre_activation: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_inf_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub da: Matrix,
    pub db: Matrix,
    pub dc: Matrix,
    pub dd: Matrix,
}

impl GradientSet {
    pub fn zeros_like(model: &ImplicitModel) -> Self {
        let d = model.dims();
        Self {
            da: Matrix::zeros(d.n, d.n),
            db: Matrix::zeros(d.n, d.p),
            dc: Matrix::zeros(d.q, d.n),
            dd: Matrix::zeros(d.q, d.p),
        }
    }

    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        self.da.axpy(1.0, &other.da)?;
        self.db.axpy(1.0, &other.db)?;
        self.dc.axpy(1.0, &other.dc)?;
        self.dd.axpy(1.0, &other.dd)
    }

    pub fn into_array(self) -> [Matrix; 4] {
        [self.da, self.db, self.dc, self.dd]
    }

    pub fn as_array(&self) -> [&Matrix; 4] {
        [&self.da, &self.db, &self.dc, &self.dd]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().map(|m| m.max_abs()).fold(0.0, f64::max)
    }
}

/// Everything the backward pass produces for one sample.
#[derive(Clone, Debug)]
pub struct Backward {
    pub grads: GradientSet,
    /// `∂L/∂u = Bᵀ v + Dᵀ ∂L/∂ŷ`.
    pub input_grad: Vec<f64>,
    /// Adjoint fixed point `w = AᵀΦ w + Cᵀ ∂L/∂ŷ`.
    pub adjoint: Vec<f64>,
    /// `v = Φ w`.
    pub v: Vec<f64>,
    pub adjoint_iterations: usize,
}

/// Entry `i` is `φ'(z_i)`: 1 where `z_i > 0`, else 0.
pub fn activation_derivative_mask(pre_activation: &[f64]) -> Vec<f64> {
    pre_activation
        .iter()
        .map(|&z| super::Activation::Relu.derivative(z))
        .collect()
}

impl ImplicitModel {
    fn check_input(&self, u: &[f64]) -> Result<()> {
        let p = self.b.cols();
        if u.len() != p {
            return Err(Error::Dimension(format!("input has length {}, model expects {p}", u.len())));
        }
        Ok(())
    }

    /// Iterates `x_{t+1} = φ(A x_t + B u)` from `x0` until two consecutive
    /// iterates differ by less than `epsilon` in ∞-norm.
    ///
    /// Without feedback `A` is strictly upper triangular, so the `n`-th iterate
    /// from any start is the exact fixed point. Those solves stop on a zero step
    /// or at step `n`, whichever comes first, and never use `epsilon`.
    ///
    /// Running out of iterations is not an error: the last iterate is returned
    /// with `converged = false`. A non-finite iterate is.
    pub fn solve_forward(&self, u: &[f64], x0: &[f64]) -> Result<EquilibriumSolution> {
        self.check_input(u)?;
        let n = self.a.rows();
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, state size is {n}", x0.len())));
        }
        let bu = self.b.matvec(u)?;
        let act = self.settings.activation;
        let eps = self.settings.epsilon;
        let mut x = x0.to_vec();
        let mut z = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut step = f64::INFINITY;
        let exact_after = (!self.feedback).then_some(n);
        for t in 1..=self.settings.max_iterations {
            self.a.matvec_into(&x, &mut z);
            for i in 0..n {
                z[i] += bu[i];
                next[i] = act.apply(z[i]);
            }
            step = inf_norm_diff(&next, &x);
            if !step.is_finite() {
                return Err(Error::Numeric(format!("forward iterate became non-finite at step {t}")));
            }
            std::mem::swap(&mut x, &mut next);
            let done = match exact_after {
                Some(limit) => step == 0.0 || t >= limit,
                None => step < eps,
            };
            if done {
                return Ok(EquilibriumSolution {
                    x,
                    pre_activation: z,
                    iterations: t,
                    converged: true,
                    final_step_inf_norm: step,
                });
            }
        }
        Ok(EquilibriumSolution {
            x,
            pre_activation: z,
            iterations: self.settings.max_iterations,
            converged: false,
            final_step_inf_norm: step,
        })
    }

    /// Applies the iteration map exactly `k` times, with no stopping test.
    pub fn iterate(&self, u: &[f64], x0: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_input(u)?;
        let n = self.a.rows();
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, state size is {n}", x0.len())));
        }
        let bu = self.b.matvec(u)?;
        let mut x = x0.to_vec();
        let mut z = vec![0.0; n];
        for _ in 0..k {
            self.a.matvec_into(&x, &mut z);
            for i in 0..n {
                x[i] = self.settings.activation.apply(z[i] + bu[i]);
            }
        }
        Ok(x)
    }

    /// `‖φ(A x + B u) − x‖_∞`.
    pub fn residual(&self, u: &[f64], x: &[f64]) -> Result<f64> {
        let next = self.iterate(u, x, 1)?;
        Ok(inf_norm_diff(&next, x))
    }

    /// `C x + D u` for a given state.
    pub fn readout(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.c.matvec(x)?;
        let du = self.d.matvec(u)?;
        y.iter_mut().zip(du).for_each(|(a, b)| *a += b);
        Ok(y)
    }

    /// Solves from `x0 = 0` and returns `ŷ` together with the solution diagnostics.
    pub fn predict_with_solution(&self, u: &[f64]) -> Result<(Vec<f64>, EquilibriumSolution)> {
        let sol = self.solve_forward(u, &vec![0.0; self.a.rows()])?;
        let y = self.readout(&sol.x, u)?;
        Ok((y, sol))
    }

    pub fn predict(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_with_solution(u)?.0)
    }

    /// Parameter gradients for one sample given `∂L/∂ŷ`.
    pub fn solve_backward(&self, u: &[f64], sol: &EquilibriumSolution, dl_dy: &[f64]) -> Result<GradientSet> {
        Ok(self.backward(u, sol, dl_dy)?.grads)
    }

    /// Full backward pass, including the input gradient needed to chain through time.
    pub fn backward(&self, u: &[f64], sol: &EquilibriumSolution, dl_dy: &[f64]) -> Result<Backward> {
        self.check_input(u)?;
        let dims = self.dims();
        if dl_dy.len() != dims.q {
            return Err(Error::Dimension(format!(
                "output gradient has length {}, model output is {}",
                dl_dy.len(),
                dims.q
            )));
        }
        if sol.x.len() != dims.n || sol.pre_activation.len() != dims.n {
            return Err(Error::Dimension("solution does not match the model state size".into()));
        }
        if !sol.converged {
            return Err(Error::Usage(
                "backward pass requires a converged forward solution".into(),
            ));
        }
        let n = dims.n;
        let mask = activation_derivative_mask(&sol.pre_activation);
        let g = self.c.matvec_transpose(dl_dy)?;

        let tol = self.settings.epsilon * g.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        let mut w = vec![0.0; n];
        let mut masked = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut iterations = 0;
        let mut converged = false;
        for t in 1..=self.settings.max_iterations {
            for i in 0..n {
                masked[i] = mask[i] * w[i];
            }
            next.copy_from_slice(&g);
            self.a.matvec_transpose_acc(&masked, &mut next);
            let step: f64 = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
            if !step.is_finite() {
                return Err(Error::Numeric(format!("adjoint iterate became non-finite at step {t}")));
            }
            std::mem::swap(&mut w, &mut next);
            iterations = t;
            if step < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numeric(format!(
                "adjoint solve did not converge in {} iterations (‖A‖_∞ = {})",
                self.settings.max_iterations,
                self.a.inf_operator_norm()
            )));
        }

        let v: Vec<f64> = w.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let grads = GradientSet {
            da: Matrix::outer(&v, &sol.x),
            db: Matrix::outer(&v, u),
            dc: Matrix::outer(dl_dy, &sol.x),
            dd: Matrix::outer(dl_dy, u),
        };
        let mut input_grad = self.b.matvec_transpose(&v)?;
        self.d.matvec_transpose_acc(dl_dy, &mut input_grad);
        Ok(Backward {
            grads,
            input_grad,
            adjoint: w,
            v,
            adjoint_iterations: iterations,
        })
    }
}
