// SPDX-License-Identifier: Apache-2.0

//! Implicit recurrent network: an implicit layer applied at every step to the
//! concatenation of the observation and the previous hidden output.
//!
//! ```text
//! h_0 = 0,  u_i = (s_i; h_{i-1}),  x_i = φ(A x_i + B u_i),  h_i = C x_i + D u_i
//! ```
//!
//! An optional affine readout maps `h_i` to the per-step output.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumSolution, GradientSet, ImplicitDims, ImplicitModel, SolverSettings};
use crate::error::{Error, Result};
use crate::numerics::{sample, streams, DistributionSpec, Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub weight: Matrix,
    /// Column vector, one entry per output.
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRnn {
    core: ImplicitModel,
    input_dim: usize,
    hidden_dim: usize,
    readout: Option<Readout>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub u: Vec<f64>,
    pub solution: EquilibriumSolution,
    /// Core prediction `ŷ_i`, which is also `h_i`.
    pub y: Vec<f64>,
    /// Readout output (equal to `y` without a readout).
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTrace {
    pub steps: Vec<StepTrace>,
    /// `h_0 ..= h_T`.
    pub hidden: Vec<Vec<f64>>,
}

impl SequenceTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.steps.iter().all(|s| s.solution.converged)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.output.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnGradients {
    pub core: GradientSet,
    pub readout_weight: Option<Matrix>,
    pub readout_bias: Option<Matrix>,
}

impl RnnGradients {
    pub fn max_abs(&self) -> f64 {
        let r = [&self.readout_weight, &self.readout_bias]
            .iter()
            .filter_map(|m| m.as_ref().map(Matrix::max_abs))
            .fold(0.0, f64::max);
        self.core.max_abs().max(r)
    }
}

impl ImplicitRnn {
    pub fn new(core: ImplicitModel, input_dim: usize, readout: Option<Readout>) -> Result<Self> {
        let dims = core.dims();
        let hidden_dim = dims.q;
        if dims.p != input_dim + hidden_dim {
            return Err(Error::Dimension(format!(
                "core input size {} must equal input_dim {input_dim} + hidden_dim {hidden_dim}",
                dims.p
            )));
        }
        if let Some(r) = &readout {
            if r.weight.cols() != hidden_dim || r.bias.shape() != (r.weight.rows(), 1) {
                return Err(Error::Dimension(format!(
                    "readout {:?} with bias {:?} does not fit hidden size {hidden_dim}",
                    r.weight.shape(),
                    r.bias.shape()
                )));
            }
        }
        Ok(Self {
            core,
            input_dim,
            hidden_dim,
            readout,
        })
    }

    /// `n` equilibrium states, `hidden_dim` carried outputs, and an optional
    /// readout to `output_dim` (no readout when `output_dim` is `None`).
    ///
    /// The columns of `B` and `D` that read `h_{i-1}` start `1/√hidden_dim` smaller
    /// than the rest: nothing in the cell saturates, so an initial recurrent gain
    /// near one grows the hidden state geometrically over long sequences.
    pub fn random(
        n: usize,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: Option<usize>,
        settings: SolverSettings,
        feedback: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut core = ImplicitModel::random(
            ImplicitDims {
                n,
                p: input_dim + hidden_dim,
                q: hidden_dim,
            },
            settings,
            feedback,
            seed,
        )?;
        let shrink = 1.0 / (hidden_dim as f64).sqrt();
        for m in [&mut core.b, &mut core.d] {
            for r in 0..m.rows() {
                for v in &mut m.row_mut(r)[input_dim..] {
                    *v *= shrink;
                }
            }
        }
        let readout = match output_dim {
            None => None,
            Some(out) => {
                // Separate stream so the core initialization is independent of the readout.
                let mut rng = RngStream::new(seed, streams::INIT + 1000);
                let dist = DistributionSpec::normal(0.0, 1.0 / (hidden_dim as f64).sqrt())?;
                Some(Readout {
                    weight: sample(&dist, (out, hidden_dim), &mut rng)?,
                    bias: Matrix::zeros(out, 1),
                })
            }
        };
        Self::new(core, input_dim, readout)
    }

    pub fn core(&self) -> &ImplicitModel {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut ImplicitModel {
        &mut self.core
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    pub fn readout_mut(&mut self) -> Option<&mut Readout> {
        self.readout.as_mut()
    }

    /// Core and readout borrowed mutably at the same time.
    pub fn split_mut(&mut self) -> (&mut ImplicitModel, Option<&mut Readout>) {
        (&mut self.core, self.readout.as_mut())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.readout.as_ref().map_or(self.hidden_dim, |r| r.weight.rows())
    }

    pub fn parameter_count(&self) -> usize {
        self.core.parameter_count()
            + self
                .readout
                .as_ref()
                .map_or(0, |r| r.weight.as_slice().len() + r.bias.rows())
    }

    /// Runs the sequence stored step-major in `seq` (`T · input_dim` values).
    pub fn forward(&self, seq: &[f64]) -> Result<SequenceTrace> {
        if self.input_dim == 0 || seq.len() % self.input_dim != 0 || seq.is_empty() {
            return Err(Error::Dimension(format!(
                "sequence of {} values is not a whole number of {}-dimensional steps",
                seq.len(),
                self.input_dim
            )));
        }
        let n = self.core.dims().n;
        let t_len = seq.len() / self.input_dim;
        let mut hidden = Vec::with_capacity(t_len + 1);
        hidden.push(vec![0.0; self.hidden_dim]);
        let mut steps = Vec::with_capacity(t_len);
        for s in seq.chunks(self.input_dim) {
            let mut u = Vec::with_capacity(self.input_dim + self.hidden_dim);
            u.extend_from_slice(s);
            u.extend_from_slice(hidden.last().expect("h_0 present"));
            let solution = self.core.solve_forward(&u, &vec![0.0; n])?;
            let y = self.core.readout(&solution.x, &u)?;
            let output = match &self.readout {
                Some(r) => {
                    let mut o = r.weight.matvec(&y)?;
                    o.iter_mut().zip(r.bias.as_slice()).for_each(|(a, b)| *a += b);
                    o
                }
                None => y.clone(),
            };
            hidden.push(y.clone());
            steps.push(StepTrace { u, solution, y, output });
        }
        Ok(SequenceTrace { steps, hidden })
    }

    /// Backpropagation through time. `d_outputs[i]` is `∂L/∂output_i`.
    pub fn backward(&self, trace: &SequenceTrace, d_outputs: &[Vec<f64>]) -> Result<RnnGradients> {
        if trace.is_empty() || trace.hidden.len() != trace.len() + 1 {
            return Err(Error::Usage("incomplete sequence trace".into()));
        }
        if d_outputs.len() != trace.len() {
            return Err(Error::Usage(format!(
                "{} output gradients for a trace of {} steps",
                d_outputs.len(),
                trace.len()
            )));
        }
        if !trace.all_converged() {
            return Err(Error::Usage("every step must have a converged forward solution".into()));
        }
        let out_dim = self.output_dim();
        let mut grads = RnnGradients {
            core: GradientSet::zeros_like(&self.core),
            readout_weight: self.readout.as_ref().map(|r| Matrix::zeros(r.weight.rows(), r.weight.cols())),
            readout_bias: self.readout.as_ref().map(|r| Matrix::zeros(r.bias.rows(), 1)),
        };
        let mut carried = vec![0.0; self.hidden_dim];
        for (step, d_out) in trace.steps.iter().zip(d_outputs).rev() {
            if d_out.len() != out_dim {
                return Err(Error::Dimension(format!(
                    "output gradient has length {}, expected {out_dim}",
                    d_out.len()
                )));
            }
            let mut dy = match &self.readout {
                Some(r) => {
                    let gw = grads.readout_weight.as_mut().expect("readout present");
                    gw.add_outer(1.0, d_out, &step.y);
                    let gb = grads.readout_bias.as_mut().expect("readout present");
                    gb.as_mut_slice().iter_mut().zip(d_out).for_each(|(a, b)| *a += b);
                    r.weight.matvec_transpose(d_out)?
                }
                None => d_out.clone(),
            };
            dy.iter_mut().zip(&carried).for_each(|(a, b)| *a += b);
            let bw = self.core.backward(&step.u, &step.solution, &dy)?;
            grads.core.accumulate(&bw.grads)?;
            carried.copy_from_slice(&bw.input_grad[self.input_dim..]);
        }
        Ok(grads)
    }
}
