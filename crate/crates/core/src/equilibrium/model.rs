// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample, streams, DistributionSpec, Matrix, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative with the subgradient at the kink taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop once `‖x_t − x_{t−1}‖_∞ < epsilon`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Radius of the ∞-norm ball `A` is kept in; must lie in `(0, 1)`.
    pub norm_bound: f64,
    pub activation: Activation,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            epsilon: 3e-6,
            max_iterations: 500,
            norm_bound: 0.95,
            activation: Activation::Relu,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Parameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if !(self.norm_bound > 0.0 && self.norm_bound < 1.0) {
            return Err(Error::Parameter(format!(
                "norm_bound must lie in (0, 1), got {}",
                self.norm_bound
            )));
        }
        Ok(())
    }
}

/// State, input and output sizes of an implicit model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitDims {
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

/// `ŷ(u) = C x + D u` where `x = φ(A x + B u)`.
///
/// After construction and after every [`apply_constraints`](Self::apply_constraints)
/// call, `‖A‖_∞ ≤ norm_bound`; without feedback `A` is also strictly upper triangular.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitModel {
    pub(crate) a: Matrix,
    pub(crate) b: Matrix,
    pub(crate) c: Matrix,
    pub(crate) d: Matrix,
    pub(crate) settings: SolverSettings,
    pub(crate) feedback: bool,
    pub(crate) init_seed: Option<u64>,
}

impl ImplicitModel {
    /// Assembles a model from explicit matrices and enforces the constraints on `A`.
    pub fn from_parts(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        d: Matrix,
        settings: SolverSettings,
        feedback: bool,
    ) -> Result<Self> {
        settings.validate()?;
        let n = a.rows();
        let p = b.cols();
        let q = c.rows();
        if a.cols() != n || b.rows() != n || c.cols() != n || d.shape() != (q, p) {
            return Err(Error::Dimension(format!(
                "inconsistent shapes A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        let mut model = Self {
            a,
            b,
            c,
            d,
            settings,
            feedback,
            init_seed: None,
        };
        model.apply_constraints();
        Ok(model)
    }

    /// Entries i.i.d. `N(0, 1/√n)`, then constrained.
    pub fn random(dims: ImplicitDims, settings: SolverSettings, feedback: bool, seed: u64) -> Result<Self> {
        if dims.n == 0 || dims.p == 0 || dims.q == 0 {
            return Err(Error::Parameter(format!("all dimensions must be positive, got {dims:?}")));
        }
        let mut rng = RngStream::new(seed, streams::INIT);
        let dist = DistributionSpec::normal(0.0, 1.0 / (dims.n as f64).sqrt())?;
        let a = sample(&dist, (dims.n, dims.n), &mut rng)?;
        let b = sample(&dist, (dims.n, dims.p), &mut rng)?;
        let c = sample(&dist, (dims.q, dims.n), &mut rng)?;
        let d = sample(&dist, (dims.q, dims.p), &mut rng)?;
        let mut model = Self::from_parts(a, b, c, d, settings, feedback)?;
        model.init_seed = Some(seed);
        Ok(model)
    }

    pub fn dims(&self) -> ImplicitDims {
        ImplicitDims {
            n: self.a.rows(),
            p: self.b.cols(),
            q: self.c.rows(),
        }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Replaces the solver settings. A tighter `norm_bound` is enforced immediately.
    pub fn set_settings(&mut self, settings: SolverSettings) -> Result<()> {
        settings.validate()?;
        self.settings = settings;
        self.apply_constraints();
        Ok(())
    }

    pub fn feedback(&self) -> bool {
        self.feedback
    }

    pub fn init_seed(&self) -> Option<u64> {
        self.init_seed
    }

    pub fn parameter_count(&self) -> usize {
        let d = self.dims();
        d.n * d.n + d.n * d.p + d.q * d.n + d.q * d.p
    }

    /// `[A, B, C, D]`.
    pub fn parameters(&self) -> [&Matrix; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    /// Raw parameter access for optimizers. Call [`apply_constraints`](Self::apply_constraints)
    /// after mutating `A`.
    pub fn parameters_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.a, &mut self.b, &mut self.c, &mut self.d]
    }

    /// Masks `A` to strictly upper triangular when feedback is off, then projects
    /// it onto the ∞-norm ball of radius `norm_bound`. `B`, `C`, `D` are untouched.
    pub fn apply_constraints(&mut self) {
        if !self.feedback {
            self.a.mask_strictly_upper();
        }
        self.a
            .project_inf_ball_in_place(self.settings.norm_bound)
            .expect("norm_bound validated positive");
    }

    pub fn satisfies_constraints(&self) -> bool {
        self.a.inf_operator_norm() <= self.settings.norm_bound
            && (self.feedback || self.a.is_strictly_upper())
    }
}
