// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        OptimizerConfig::Sgd { momentum: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { momentum } => (0.0..1.0).contains(&momentum),
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First-order optimizer state for an ordered list of parameter matrices.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    learning_rate: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, learning_rate: f64) -> Self {
        Self {
            config,
            learning_rate,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Dimension(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let lr = self.learning_rate;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {k} is {:?} but its gradient is {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            let pv = p.as_mut_slice();
            let gv = g.as_slice();
            match self.config {
                OptimizerConfig::Sgd { momentum } => {
                    let vel = self.first[k].as_mut_slice();
                    for i in 0..pv.len() {
                        vel[i] = momentum * vel[i] + gv[i];
                        pv[i] -= lr * vel[i];
                    }
                }
                OptimizerConfig::Adam { beta1, beta2, eps } => {
                    let t = self.steps as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = self.first[k].as_mut_slice();
                    let v = self.second[k].as_mut_slice();
                    for i in 0..pv.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gv[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gv[i] * gv[i];
                        pv[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
            if !pv.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("parameter {k} became non-finite")));
            }
        }
        Ok(())
    }
}
