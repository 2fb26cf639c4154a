// SPDX-License-Identifier: Apache-2.0

//! One interface over the four trainable model families.
//!
//! Flat models (implicit, MLP) read a whole sample row and emit either one
//! output block or one block per step. Sequence models (implicitRNN, Elman)
//! read the row step by step and emit one block per step.

use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use crate::baselines::{ElmanRnn, HiddenActivation, MlpModel};
use crate::equilibrium::{GradientSet, ImplicitDims, ImplicitModel, SolverSettings};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::sequence::ImplicitRnn;
use crate::tasks::TaskDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Implicit,
    ImplicitRnn,
    Mlp,
    Elman,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Implicit,
        ModelKind::ImplicitRnn,
        ModelKind::Mlp,
        ModelKind::Elman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Implicit => "implicit",
            ModelKind::ImplicitRnn => "implicit-rnn",
            ModelKind::Mlp => "mlp",
            ModelKind::Elman => "elman",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                what: "model",
                name: s.to_string(),
            })
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, ModelKind::ImplicitRnn | ModelKind::Elman)
    }
}

/// Which target blocks contribute to the training loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSteps {
    #[default]
    All,
    Final,
}

/// Shape of a dataset as seen by a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataLayout {
    pub steps: usize,
    pub step_input: usize,
    pub step_target: usize,
    pub target_blocks: usize,
}

impl DataLayout {
    pub fn of(ds: &TaskDataset) -> Self {
        Self {
            steps: ds.steps,
            step_input: ds.step_input_dim(),
            step_target: ds.step_target_dim(),
            target_blocks: ds.target_blocks(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.step_input
    }

    /// Output width of a flat model trained under `loss_steps`.
    pub fn flat_output_len(&self, loss_steps: LossSteps) -> usize {
        match loss_steps {
            LossSteps::All => self.target_blocks * self.step_target,
            LossSteps::Final => self.step_target,
        }
    }
}

/// Architecture choice; dimensions that come from the data are filled in by [`Model::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Equilibrium state size `n` (implicit, implicitRNN).
    pub state_dim: usize,
    /// Carried hidden size (implicitRNN, Elman).
    pub hidden_dim: usize,
    /// Hidden layer widths (MLP).
    pub mlp_hidden: Vec<usize>,
    /// Affine readout after the implicitRNN hidden output. Without it the hidden
    /// output must have the target width.
    pub readout: bool,
    pub solver: SolverSettings,
    pub feedback: bool,
}

impl ModelSpec {
    pub fn implicit(state_dim: usize) -> Self {
        Self {
            kind: ModelKind::Implicit,
            state_dim,
            hidden_dim: 0,
            mlp_hidden: Vec::new(),
            readout: false,
            solver: SolverSettings::default(),
            feedback: true,
        }
    }

    pub fn implicit_rnn(state_dim: usize, hidden_dim: usize, readout: bool) -> Self {
        Self {
            kind: ModelKind::ImplicitRnn,
            hidden_dim,
            readout,
            ..Self::implicit(state_dim)
        }
    }

    pub fn mlp(hidden: &[usize]) -> Self {
        Self {
            kind: ModelKind::Mlp,
            mlp_hidden: hidden.to_vec(),
            ..Self::implicit(0)
        }
    }

    pub fn elman(hidden_dim: usize) -> Self {
        Self {
            kind: ModelKind::Elman,
            hidden_dim,
            ..Self::implicit(0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Implicit(ImplicitModel),
    ImplicitRnn(ImplicitRnn),
    Mlp(MlpModel),
    Elman(ElmanRnn),
}

/// Outputs of one sample, split into blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub blocks: Vec<Vec<f64>>,
    /// Forward iteration counts, one per equilibrium solve.
    pub iterations: Vec<usize>,
    /// Equilibrium state of a flat implicit model, for warm starts.
    pub state: Option<Vec<f64>>,
}

impl SampleOutput {
    pub fn scored(&self) -> &[f64] {
        self.blocks.last().expect("at least one output block")
    }
}

#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: f64,
    /// Same order as [`Model::parameters_mut`].
    pub grads: Vec<Matrix>,
    pub iterations: Vec<usize>,
    pub state: Option<Vec<f64>>,
}

/// Pairs of (output block, target block) that enter the loss.
fn loss_pairs(n_out: usize, n_target: usize, loss_steps: LossSteps) -> Vec<(usize, usize)> {
    if loss_steps == LossSteps::Final || n_out != n_target {
        vec![(n_out - 1, n_target - 1)]
    } else {
        (0..n_out).map(|i| (i, i)).collect()
    }
}

/// Mean block loss over the selected pairs, with `∂L/∂block` for every output block.
fn blocks_loss(
    out: &[Vec<f64>],
    target: &[f64],
    layout: &DataLayout,
    loss: LossKind,
    loss_steps: LossSteps,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let tgt: Vec<&[f64]> = target.chunks(layout.step_target).collect();
    if tgt.len() != layout.target_blocks {
        return Err(Error::Dimension(format!(
            "target row of {} values does not hold {} blocks of {}",
            target.len(),
            layout.target_blocks,
            layout.step_target
        )));
    }
    let mut grads: Vec<Vec<f64>> = out.iter().map(|b| vec![0.0; b.len()]).collect();
    let pairs = loss_pairs(out.len(), tgt.len(), loss_steps);
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for (o, t) in pairs {
        if out[o].len() != tgt[t].len() {
            return Err(Error::Dimension(format!(
                "output block of width {} against target block of width {}",
                out[o].len(),
                tgt[t].len()
            )));
        }
        let (l, g) = loss.block(&out[o], tgt[t]);
        total += l * scale;
        grads[o].iter_mut().zip(g).for_each(|(a, b)| *a = b * scale);
    }
    Ok((total, grads))
}

fn require_converged(ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::NonConvergence("forward solve did not converge".into()))
    }
}

fn mask_lower(g: &mut GradientSet, feedback: bool) {
    if !feedback {
        g.da.mask_strictly_upper();
    }
}

impl Model {
    /// Fresh model for `layout`, initialized from `seed`.
    pub fn build(spec: &ModelSpec, layout: &DataLayout, loss_steps: LossSteps, seed: u64) -> Result<Self> {
        match spec.kind {
            ModelKind::Implicit => Ok(Model::Implicit(ImplicitModel::random(
                ImplicitDims {
                    n: spec.state_dim,
                    p: layout.input_len(),
                    q: layout.flat_output_len(loss_steps),
                },
                spec.solver,
                spec.feedback,
                seed,
            )?)),
            ModelKind::Mlp => {
                let mut sizes = vec![layout.input_len()];
                sizes.extend_from_slice(&spec.mlp_hidden);
                sizes.push(layout.flat_output_len(loss_steps));
                Ok(Model::Mlp(MlpModel::new(&sizes, HiddenActivation::Relu, seed)?))
            }
            ModelKind::ImplicitRnn => {
                let out = if spec.readout {
                    Some(layout.step_target)
                } else if spec.hidden_dim == layout.step_target {
                    None
                } else {
                    return Err(Error::Dimension(format!(
                        "hidden size {} differs from target width {} and no readout was requested",
                        spec.hidden_dim, layout.step_target
                    )));
                };
                Ok(Model::ImplicitRnn(ImplicitRnn::random(
                    spec.state_dim,
                    layout.step_input,
                    spec.hidden_dim,
                    out,
                    spec.solver,
                    spec.feedback,
                    seed,
                )?))
            }
            ModelKind::Elman => Ok(Model::Elman(ElmanRnn::new(
                layout.step_input,
                spec.hidden_dim,
                layout.step_target,
                seed,
            )?)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Implicit(_) => ModelKind::Implicit,
            Model::ImplicitRnn(_) => ModelKind::ImplicitRnn,
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Elman(_) => ModelKind::Elman,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Model::Implicit(m) => m.parameter_count(),
            Model::ImplicitRnn(m) => m.parameter_count(),
            Model::Mlp(m) => m.parameter_count(),
            Model::Elman(m) => m.parameter_count(),
        }
    }

    /// The equilibrium core, if the model has one.
    pub fn implicit_core(&self) -> Option<&ImplicitModel> {
        match self {
            Model::Implicit(m) => Some(m),
            Model::ImplicitRnn(m) => Some(m.core()),
            _ => None,
        }
    }

    pub fn implicit_core_mut(&mut self) -> Option<&mut ImplicitModel> {
        match self {
            Model::Implicit(m) => Some(m),
            Model::ImplicitRnn(m) => Some(m.core_mut()),
            _ => None,
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Model::Implicit(m) => m.parameters_mut().into_iter().collect(),
            Model::ImplicitRnn(m) => {
                let (core, readout) = m.split_mut();
                let mut v: Vec<&mut Matrix> = core.parameters_mut().into_iter().collect();
                if let Some(r) = readout {
                    v.push(&mut r.weight);
                    v.push(&mut r.bias);
                }
                v
            }
            Model::Mlp(m) => m.parameters_mut(),
            Model::Elman(m) => m.parameters_mut().into_iter().collect(),
        }
    }

    /// Re-establishes the well-posedness constraint after a parameter update.
    pub fn apply_constraints(&mut self) {
        if let Some(core) = self.implicit_core_mut() {
            core.apply_constraints();
        }
    }

    /// Checks that the model accepts rows of `layout`.
    pub fn check_layout(&self, layout: &DataLayout) -> Result<()> {
        let (input, out) = match self {
            Model::Implicit(m) => (m.dims().p, m.dims().q),
            Model::Mlp(m) => (m.sizes()[0], *m.sizes().last().expect("sizes")),
            Model::ImplicitRnn(m) => (m.input_dim(), m.output_dim()),
            Model::Elman(m) => (m.input_dim(), m.output_dim()),
        };
        let ok = if self.kind().is_sequential() {
            input == layout.step_input && out == layout.step_target
        } else {
            input == layout.input_len()
                && (out == layout.step_target || out == layout.target_blocks * layout.step_target)
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{} model with input {input} and output {out} does not fit data with {} steps of {} inputs and {} blocks of {} targets",
                self.kind().name(),
                layout.steps,
                layout.step_input,
                layout.target_blocks,
                layout.step_target
            )))
        }
    }

    /// Forward pass on one sample row. Non-converged solves are reported as an error.
    pub fn forward(&self, input: &[f64], layout: &DataLayout, x0: Option<&[f64]>) -> Result<SampleOutput> {
        match self {
            Model::Implicit(m) => {
                let zero;
                let start = match x0 {
                    Some(x) => x,
                    None => {
                        zero = vec![0.0; m.dims().n];
                        &zero
                    }
                };
                let sol = m.solve_forward(input, start)?;
                require_converged(sol.converged)?;
                let y = m.readout(&sol.x, input)?;
                Ok(SampleOutput {
                    blocks: y.chunks(layout.step_target).map(<[f64]>::to_vec).collect(),
                    iterations: vec![sol.iterations],
                    state: Some(sol.x),
                })
            }
            Model::Mlp(m) => {
                let y = m.predict(input)?;
                Ok(SampleOutput {
                    blocks: y.chunks(layout.step_target).map(<[f64]>::to_vec).collect(),
                    iterations: Vec::new(),
                    state: None,
                })
            }
            Model::ImplicitRnn(m) => {
                let trace = m.forward(input)?;
                require_converged(trace.all_converged())?;
                Ok(SampleOutput {
                    iterations: trace.steps.iter().map(|s| s.solution.iterations).collect(),
                    blocks: trace.steps.into_iter().map(|s| s.output).collect(),
                    state: None,
                })
            }
            Model::Elman(m) => Ok(SampleOutput {
                blocks: m.forward(input)?.outputs,
                iterations: Vec::new(),
                state: None,
            }),
        }
    }

    /// Loss and parameter gradients of one sample.
    pub fn sample_gradient(
        &self,
        input: &[f64],
        target: &[f64],
        layout: &DataLayout,
        loss: LossKind,
        loss_steps: LossSteps,
        x0: Option<&[f64]>,
    ) -> Result<SampleGradient> {
        match self {
            Model::Implicit(m) => {
                let zero;
                let start = match x0 {
                    Some(x) => x,
                    None => {
                        zero = vec![0.0; m.dims().n];
                        &zero
                    }
                };
                let sol = m.solve_forward(input, start)?;
                require_converged(sol.converged)?;
                let y = m.readout(&sol.x, input)?;
                let blocks: Vec<Vec<f64>> = y.chunks(layout.step_target).map(<[f64]>::to_vec).collect();
                let (l, g) = blocks_loss(&blocks, target, layout, loss, loss_steps)?;
                let dl_dy: Vec<f64> = g.concat();
                let mut grads = m.solve_backward(input, &sol, &dl_dy)?;
                mask_lower(&mut grads, m.feedback());
                Ok(SampleGradient {
                    loss: l,
                    grads: grads.into_array().into(),
                    iterations: vec![sol.iterations],
                    state: Some(sol.x),
                })
            }
            Model::Mlp(m) => {
                let cache = m.forward(input)?;
                let blocks: Vec<Vec<f64>> = cache.output().chunks(layout.step_target).map(<[f64]>::to_vec).collect();
                let (l, g) = blocks_loss(&blocks, target, layout, loss, loss_steps)?;
                let (mg, _) = m.backward(&cache, &g.concat())?;
                let grads = mg
                    .weights
                    .into_iter()
                    .zip(mg.biases)
                    .flat_map(|(w, b)| [w, b])
                    .collect();
                Ok(SampleGradient {
                    loss: l,
                    grads,
                    iterations: Vec::new(),
                    state: None,
                })
            }
            Model::ImplicitRnn(m) => {
                let trace = m.forward(input)?;
                require_converged(trace.all_converged())?;
                let outs: Vec<Vec<f64>> = trace.outputs().map(<[f64]>::to_vec).collect();
                let (l, g) = blocks_loss(&outs, target, layout, loss, loss_steps)?;
                let rg = m.backward(&trace, &g)?;
                let mut core = rg.core;
                mask_lower(&mut core, m.core().feedback());
                let mut grads: Vec<Matrix> = core.into_array().into();
                grads.extend(rg.readout_weight);
                grads.extend(rg.readout_bias);
                Ok(SampleGradient {
                    loss: l,
                    grads,
                    iterations: trace.steps.iter().map(|s| s.solution.iterations).collect(),
                    state: None,
                })
            }
            Model::Elman(m) => {
                let cache = m.forward(input)?;
                let (l, g) = blocks_loss(&cache.outputs, target, layout, loss, loss_steps)?;
                let eg = m.backward(&cache, &g)?;
                Ok(SampleGradient {
                    loss: l,
                    grads: vec![eg.w_ih, eg.w_hh, eg.b_h, eg.w_ho, eg.b_o],
                    iterations: Vec::new(),
                    state: None,
                })
            }
        }
    }
}
