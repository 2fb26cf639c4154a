// SPDX-License-Identifier: Apache-2.0

//! Explicit reference models trained with ordinary backpropagation: a
//! fully-connected MLP and an Elman recurrent network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample, streams, DistributionSpec, Matrix, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Relu,
    Tanh,
}

impl HiddenActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => z.max(0.0),
            HiddenActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative written in terms of the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Tanh => 1.0 - a * a,
        }
    }
}

fn init_weight(rows: usize, cols: usize, rng: &mut RngStream) -> Result<Matrix> {
    // He-style scaling on fan-in.
    let dist = DistributionSpec::normal(0.0, (2.0 / cols as f64).sqrt())?;
    sample(&dist, (rows, cols), rng)
}

/// Layer sizes `[in, h1, ..., out]`; hidden layers use `activation`, the output is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    sizes: Vec<usize>,
    weights: Vec<Matrix>,
    /// Column vectors.
    biases: Vec<Matrix>,
    activation: HiddenActivation,
}

/// Pre-activations and activations of every layer, for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// `activations[0]` is the input, the last entry the output.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl MlpModel {
    pub fn new(sizes: &[usize], activation: HiddenActivation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = RngStream::new(seed, streams::INIT);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            weights.push(init_weight(w[1], w[0], &mut rng)?);
            biases.push(Matrix::zeros(w[1], 1));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Matrix>, activation: HiddenActivation) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Dimension("one bias per weight matrix required".into()));
        }
        let mut sizes = vec![weights[0].cols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.cols() != *sizes.last().expect("nonempty") || b.shape() != (w.rows(), 1) {
                return Err(Error::Dimension(format!(
                    "layer {:?} with bias {:?} does not chain",
                    w.shape(),
                    b.shape()
                )));
            }
            sizes.push(w.rows());
        }
        Ok(Self {
            sizes,
            weights,
            biases,
            activation,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn activation(&self) -> HiddenActivation {
        self.activation
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.as_slice().len()).sum::<usize>()
            + self.biases.iter().map(Matrix::rows).sum::<usize>()
    }

    /// Weights and biases interleaved: `[W0, b0, W1, b1, ...]`.
    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn forward(&self, u: &[f64]) -> Result<MlpCache> {
        if u.len() != self.sizes[0] {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                u.len(),
                self.sizes[0]
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = vec![u.to_vec()];
        let mut pre_activations = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.matvec(activations.last().expect("nonempty"))?;
            z.iter_mut().zip(b.as_slice()).for_each(|(a, c)| *a += c);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(MlpCache {
            activations,
            pre_activations,
        })
    }

    pub fn predict(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(u)?.activations.pop().expect("output layer"))
    }

    /// Returns the parameter gradients and `∂L/∂u`.
    pub fn backward(&self, cache: &MlpCache, dl_dy: &[f64]) -> Result<(MlpGradients, Vec<f64>)> {
        let out = *self.sizes.last().expect("nonempty");
        if dl_dy.len() != out {
            return Err(Error::Dimension(format!(
                "output gradient has length {}, network output is {out}",
                dl_dy.len()
            )));
        }
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = dl_dy.to_vec();
        for l in (0..layers).rev() {
            gw.push(Matrix::outer(&delta, &cache.activations[l]));
            gb.push(Matrix::column(&delta)?);
            let mut prev = self.weights[l].matvec_transpose(&delta)?;
            if l > 0 {
                let z = &cache.pre_activations[l - 1];
                let a = &cache.activations[l];
                for i in 0..prev.len() {
                    prev[i] *= self.activation.derivative(z[i], a[i]);
                }
            }
            delta = prev;
        }
        gw.reverse();
        gb.reverse();
        Ok((MlpGradients { weights: gw, biases: gb }, delta))
    }
}

/// `h_t = tanh(W_ih s_t + W_hh h_{t−1} + b_h)`, `y_t = W_ho h_t + b_o`, `h_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElmanRnn {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
    pub w_ho: Matrix,
    pub b_o: Matrix,
}

#[derive(Clone, Debug)]
pub struct ElmanCache {
    pub inputs: Vec<Vec<f64>>,
    /// `h_0 ..= h_T`.
    pub hidden: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElmanGradients {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
    pub w_ho: Matrix,
    pub b_o: Matrix,
}

impl ElmanGradients {
    pub fn as_array(&self) -> [&Matrix; 5] {
        [&self.w_ih, &self.w_hh, &self.b_h, &self.w_ho, &self.b_o]
    }
}

impl ElmanRnn {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::Parameter("Elman dimensions must be positive".into()));
        }
        let mut rng = RngStream::new(seed, streams::INIT);
        let xavier = |rows: usize, cols: usize, rng: &mut RngStream| -> Result<Matrix> {
            let dist = DistributionSpec::normal(0.0, (1.0 / cols as f64).sqrt())?;
            sample(&dist, (rows, cols), rng)
        };
        Ok(Self {
            w_ih: xavier(hidden_dim, input_dim, &mut rng)?,
            w_hh: xavier(hidden_dim, hidden_dim, &mut rng)?,
            b_h: Matrix::zeros(hidden_dim, 1),
            w_ho: xavier(output_dim, hidden_dim, &mut rng)?,
            b_o: Matrix::zeros(output_dim, 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_ho.rows()
    }

    pub fn parameter_count(&self) -> usize {
        [&self.w_ih, &self.w_hh, &self.b_h, &self.w_ho, &self.b_o]
            .iter()
            .map(|m| m.as_slice().len())
            .sum()
    }

    pub fn parameters_mut(&mut self) -> [&mut Matrix; 5] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.b_h, &mut self.w_ho, &mut self.b_o]
    }

    /// `seq` holds `T · input_dim` values, step-major.
    pub fn forward(&self, seq: &[f64]) -> Result<ElmanCache> {
        let i_dim = self.input_dim();
        if seq.is_empty() || seq.len() % i_dim != 0 {
            return Err(Error::Dimension(format!(
                "sequence of {} values is not a whole number of {i_dim}-dimensional steps",
                seq.len()
            )));
        }
        let h_dim = self.hidden_dim();
        let mut hidden = vec![vec![0.0; h_dim]];
        let mut outputs = Vec::new();
        let mut inputs = Vec::new();
        for s in seq.chunks(i_dim) {
            let mut z = self.w_ih.matvec(s)?;
            let rec = self.w_hh.matvec(hidden.last().expect("h_0"))?;
            for k in 0..h_dim {
                z[k] += rec[k] + self.b_h.as_slice()[k];
            }
            let h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let mut y = self.w_ho.matvec(&h)?;
            y.iter_mut().zip(self.b_o.as_slice()).for_each(|(a, b)| *a += b);
            inputs.push(s.to_vec());
            hidden.push(h);
            outputs.push(y);
        }
        Ok(ElmanCache { inputs, hidden, outputs })
    }

    pub fn backward(&self, cache: &ElmanCache, d_outputs: &[Vec<f64>]) -> Result<ElmanGradients> {
        if d_outputs.len() != cache.outputs.len() {
            return Err(Error::Usage(format!(
                "{} output gradients for {} steps",
                d_outputs.len(),
                cache.outputs.len()
            )));
        }
        let h_dim = self.hidden_dim();
        let mut g = ElmanGradients {
            w_ih: Matrix::zeros(self.w_ih.rows(), self.w_ih.cols()),
            w_hh: Matrix::zeros(h_dim, h_dim),
            b_h: Matrix::zeros(h_dim, 1),
            w_ho: Matrix::zeros(self.w_ho.rows(), h_dim),
            b_o: Matrix::zeros(self.w_ho.rows(), 1),
        };
        let mut carried = vec![0.0; h_dim];
        for t in (0..cache.outputs.len()).rev() {
            let d_out = &d_outputs[t];
            if d_out.len() != self.output_dim() {
                return Err(Error::Dimension(format!(
                    "output gradient has length {}, expected {}",
                    d_out.len(),
                    self.output_dim()
                )));
            }
            let h = &cache.hidden[t + 1];
            g.w_ho.add_outer(1.0, d_out, h);
            g.b_o.as_mut_slice().iter_mut().zip(d_out).for_each(|(a, b)| *a += b);
            let mut dh = self.w_ho.matvec_transpose(d_out)?;
            dh.iter_mut().zip(&carried).for_each(|(a, b)| *a += b);
            let dz: Vec<f64> = dh.iter().zip(h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
            g.w_ih.add_outer(1.0, &dz, &cache.inputs[t]);
            g.w_hh.add_outer(1.0, &dz, &cache.hidden[t]);
            g.b_h.as_mut_slice().iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
            carried = self.w_hh.matvec_transpose(&dz)?;
        }
        Ok(g)
    }
}
