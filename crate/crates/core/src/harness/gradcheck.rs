// SPDX-License-Identifier: Apache-2.0

//! Central finite-difference check of the analytic gradients.
//!
//! The numeric side never calls a backward pass or the convergence test of the
//! solver: equilibria are found by applying the iteration map until the state
//! stops changing in floating point, and losses are recomputed from scratch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::model::{DataLayout, LossSteps, Model, ModelKind};
use crate::baselines::{ElmanRnn, HiddenActivation, MlpModel};
use crate::equilibrium::{ImplicitDims, ImplicitModel, SolverSettings};
use crate::error::{Error, Result};
use crate::numerics::{inf_norm_diff, streams, RngStream};
use crate::sequence::ImplicitRnn;

/// Instances with any ReLU pre-activation closer than this to zero are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradient magnitudes below this are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;
const MAX_REDRAWS: usize = 200;
const ORACLE_MAX_ITERATIONS: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstEntry {
    pub trial: usize,
    pub parameter: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub model: ModelKind,
    pub trials: usize,
    pub tolerance: f64,
    pub checked_entries: usize,
    /// Instances discarded for sitting too close to a ReLU kink.
    pub redrawn: usize,
    pub max_relative_error: f64,
    pub worst: Option<WorstEntry>,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

struct Instance {
    model: Model,
    layout: DataLayout,
    input: Vec<f64>,
    target: Vec<f64>,
    loss_steps: LossSteps,
}

fn gaussian(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

fn tight_settings() -> SolverSettings {
    SolverSettings {
        epsilon: 1e-14,
        max_iterations: ORACLE_MAX_ITERATIONS,
        ..SolverSettings::default()
    }
}

fn draw_instance(kind: ModelKind, trial: usize, rng: &mut RngStream) -> Result<Instance> {
    let seed: u64 = rng.inner().random();
    let feedback = trial % 2 == 0;
    let loss_steps = if trial % 3 == 2 { LossSteps::Final } else { LossSteps::All };
    let (model, layout) = match kind {
        ModelKind::Implicit => (
            Model::Implicit(ImplicitModel::random(ImplicitDims { n: 8, p: 5, q: 3 }, tight_settings(), feedback, seed)?),
            DataLayout {
                steps: 1,
                step_input: 5,
                step_target: 3,
                target_blocks: 1,
            },
        ),
        ModelKind::Mlp => (
            Model::Mlp(MlpModel::new(&[5, 7, 6, 3], HiddenActivation::Relu, seed)?),
            DataLayout {
                steps: 1,
                step_input: 5,
                step_target: 3,
                target_blocks: 1,
            },
        ),
        ModelKind::ImplicitRnn => (
            Model::ImplicitRnn(ImplicitRnn::random(6, 2, 3, Some(2), tight_settings(), feedback, seed)?),
            DataLayout {
                steps: 4,
                step_input: 2,
                step_target: 2,
                target_blocks: 4,
            },
        ),
        ModelKind::Elman => (
            Model::Elman(ElmanRnn::new(2, 5, 2, seed)?),
            DataLayout {
                steps: 4,
                step_input: 2,
                step_target: 2,
                target_blocks: 4,
            },
        ),
    };
    let input = gaussian(rng, layout.input_len());
    let target = gaussian(rng, layout.target_blocks * layout.step_target);
    Ok(Instance {
        model,
        layout,
        input,
        target,
        loss_steps,
    })
}

/// Applies the iteration map until the state is bitwise stationary (or the cap is hit).
fn exact_fixed_point(m: &ImplicitModel, u: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; m.dims().n];
    for _ in 0..ORACLE_MAX_ITERATIONS {
        let next = m.iterate(u, &x, 1)?;
        if inf_norm_diff(&next, &x) == 0.0 {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

fn pre_activation(m: &ImplicitModel, u: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = m.a().matvec(x).expect("square A");
    let bu = m.b().matvec(u).expect("B matches u");
    ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
}

/// Output blocks recomputed without any backward-pass machinery, plus every
/// ReLU pre-activation encountered.
fn oracle_outputs(inst: &Instance, model: &Model) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let l = &inst.layout;
    match model {
        Model::Implicit(m) => {
            let x = exact_fixed_point(m, &inst.input)?;
            let z = pre_activation(m, &inst.input, &x);
            let y = m.readout(&x, &inst.input)?;
            Ok((y.chunks(l.step_target).map(<[f64]>::to_vec).collect(), z))
        }
        Model::ImplicitRnn(m) => {
            let core = m.core();
            let mut h = vec![0.0; m.hidden_dim()];
            let mut outs = Vec::new();
            let mut zs = Vec::new();
            for s in inst.input.chunks(m.input_dim()) {
                let u: Vec<f64> = s.iter().chain(&h).copied().collect();
                let x = exact_fixed_point(core, &u)?;
                zs.extend(pre_activation(core, &u, &x));
                h = core.readout(&x, &u)?;
                let r = m.readout().expect("gradcheck instances have a readout");
                let mut o = r.weight.matvec(&h)?;
                o.iter_mut().zip(r.bias.as_slice()).for_each(|(a, b)| *a += b);
                outs.push(o);
            }
            Ok((outs, zs))
        }
        Model::Mlp(m) => {
            let cache = m.forward(&inst.input)?;
            let hidden = cache.pre_activations.len().saturating_sub(1);
            let zs = cache.pre_activations[..hidden].concat();
            Ok((cache.output().chunks(l.step_target).map(<[f64]>::to_vec).collect(), zs))
        }
        Model::Elman(m) => Ok((m.forward(&inst.input)?.outputs, Vec::new())),
    }
}

/// Mean over scored blocks of the per-block mean squared error.
fn oracle_loss(inst: &Instance, model: &Model) -> Result<f64> {
    let (outs, _) = oracle_outputs(inst, model)?;
    let targets: Vec<&[f64]> = inst.target.chunks(inst.layout.step_target).collect();
    let pairs: Vec<(usize, usize)> = if inst.loss_steps == LossSteps::Final || outs.len() != targets.len() {
        vec![(outs.len() - 1, targets.len() - 1)]
    } else {
        (0..outs.len()).map(|i| (i, i)).collect()
    };
    let mut total = 0.0;
    for &(o, t) in &pairs {
        let se: f64 = outs[o].iter().zip(targets[t]).map(|(a, b)| (a - b) * (a - b)).sum();
        total += se / outs[o].len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn masked_entry(model: &Model, parameter: usize, index: usize) -> bool {
    match model.implicit_core() {
        Some(core) if !core.feedback() && parameter == 0 => {
            let n = core.dims().n;
            index % n <= index / n
        }
        _ => false,
    }
}

/// Checks every parameter gradient of `trials` random instances of `kind`.
pub fn gradcheck(kind: ModelKind, trials: usize, tolerance: f64, seed: u64) -> Result<GradcheckReport> {
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tolerance}")));
    }
    let mut rng = RngStream::new(seed, streams::GRADCHECK);
    let mut report = GradcheckReport {
        model: kind,
        trials,
        tolerance,
        checked_entries: 0,
        redrawn: 0,
        max_relative_error: 0.0,
        worst: None,
        passed: false,
    };
    for trial in 0..trials {
        let mut inst = draw_instance(kind, trial, &mut rng)?;
        let mut draws = 1;
        while oracle_outputs(&inst, &inst.model)?.1.iter().any(|z| z.abs() <= KINK_MARGIN) {
            if draws == MAX_REDRAWS {
                return Err(Error::Numeric(format!(
                    "no kink-free {} instance after {MAX_REDRAWS} draws",
                    kind.name()
                )));
            }
            inst = draw_instance(kind, trial, &mut rng)?;
            draws += 1;
            report.redrawn += 1;
        }
        let analytic = inst.model.sample_gradient(
            &inst.input,
            &inst.target,
            &inst.layout,
            LossKind::Mse,
            inst.loss_steps,
            None,
        )?;
        let mut probe = inst.model.clone();
        for (k, g) in analytic.grads.iter().enumerate() {
            for i in 0..g.as_slice().len() {
                if masked_entry(&inst.model, k, i) {
                    continue;
                }
                let orig = probe.parameters_mut()[k].as_slice()[i];
                probe.parameters_mut()[k].as_mut_slice()[i] = orig + FD_STEP;
                let lp = oracle_loss(&inst, &probe)?;
                probe.parameters_mut()[k].as_mut_slice()[i] = orig - FD_STEP;
                let lm = oracle_loss(&inst, &probe)?;
                probe.parameters_mut()[k].as_mut_slice()[i] = orig;
                let numeric = (lp - lm) / (2.0 * FD_STEP);
                let a = g.as_slice()[i];
                let err = relative_error(a, numeric);
                report.checked_entries += 1;
                if err > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = report.max_relative_error.max(err);
                    report.worst = Some(WorstEntry {
                        trial,
                        parameter: k,
                        index: i,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    report.passed = report.max_relative_error < tolerance;
    Ok(report)
}
