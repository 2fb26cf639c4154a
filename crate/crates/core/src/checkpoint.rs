// SPDX-License-Identifier: Apache-2.0

//! Single-file model container.
//!
//! ```text
//! magic "EQLBCKPT" | u32 LE version | u64 LE header length | JSON header | matrices
//! ```
//!
//! Matrices follow in [`Model::parameters_mut`] order, each in the binary matrix
//! format. Bytes are a pure function of the model and metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{ElmanRnn, HiddenActivation, MlpModel};
use crate::equilibrium::{ImplicitModel, SolverSettings};
use crate::error::{Error, Result};
use crate::harness::{DataLayout, Model, ModelKind};
use crate::numerics::Matrix;
use crate::sequence::{ImplicitRnn, Readout};
use crate::tasks::TaskSpec;

pub const MAGIC: &[u8; 8] = b"EQLBCKPT";
pub const VERSION: u32 = 1;

/// Provenance stored next to the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Option<TaskSpec>,
    pub layout: Option<DataLayout>,
    pub train_seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelKind,
    shapes: Vec<(usize, usize)>,
    solver: Option<SolverSettings>,
    feedback: Option<bool>,
    init_seed: Option<u64>,
    rnn_input_dim: Option<usize>,
    mlp_activation: Option<HiddenActivation>,
    meta: CheckpointMeta,
}

fn header_of(model: &mut Model, meta: &CheckpointMeta) -> Header {
    let core = model.implicit_core().cloned();
    let (rnn_input_dim, mlp_activation) = match &*model {
        Model::ImplicitRnn(m) => (Some(m.input_dim()), None),
        Model::Mlp(m) => (None, Some(m.activation())),
        _ => (None, None),
    };
    Header {
        model: model.kind(),
        shapes: model.parameters_mut().iter().map(|m| m.shape()).collect(),
        solver: core.as_ref().map(|c| *c.settings()),
        feedback: core.as_ref().map(ImplicitModel::feedback),
        init_seed: core.as_ref().and_then(ImplicitModel::init_seed),
        rnn_input_dim,
        mlp_activation,
        meta: meta.clone(),
    }
}

/// Serializes `model` and `meta` into the checkpoint byte format.
pub fn to_bytes(model: &Model, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut model = model.clone();
    let header = serde_json::to_vec(&header_of(&mut model, meta))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for m in model.parameters_mut() {
        m.write_binary(&mut out).expect("writing to a Vec cannot fail");
    }
    Ok(out)
}

fn core_from(mats: &mut std::vec::IntoIter<Matrix>, h: &Header) -> Result<ImplicitModel> {
    let missing = || Error::Format("checkpoint is missing implicit model settings".into());
    let mut next = || mats.next().ok_or_else(|| Error::Format("checkpoint is missing matrices".into()));
    let (a, b, c, d) = (next()?, next()?, next()?, next()?);
    let mut core = ImplicitModel::from_parts(a, b, c, d, h.solver.ok_or_else(missing)?, h.feedback.ok_or_else(missing)?)?;
    core.init_seed = h.init_seed;
    Ok(core)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model, CheckpointMeta)> {
    let truncated = || Error::Format("checkpoint is truncated".into());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(truncated)?;
    let header_bytes = body.get(..hlen).ok_or_else(truncated)?;
    let h: Header = serde_json::from_slice(header_bytes)?;
    let mut rest = &body[hlen..];
    let mut mats = Vec::with_capacity(h.shapes.len());
    for &shape in &h.shapes {
        let m = Matrix::read_binary(&mut rest)?;
        if m.shape() != shape {
            return Err(Error::Format(format!(
                "matrix has shape {:?}, header says {shape:?}",
                m.shape()
            )));
        }
        mats.push(m);
    }
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after the last matrix", rest.len())));
    }
    let mut it = mats.into_iter();
    let model = match h.model {
        ModelKind::Implicit => Model::Implicit(core_from(&mut it, &h)?),
        ModelKind::ImplicitRnn => {
            let core = core_from(&mut it, &h)?;
            let readout = match (it.next(), it.next()) {
                (Some(weight), Some(bias)) => Some(Readout { weight, bias }),
                (None, None) => None,
                _ => return Err(Error::Format("readout needs a weight and a bias".into())),
            };
            let input_dim = h
                .rnn_input_dim
                .ok_or_else(|| Error::Format("checkpoint is missing the implicitRNN input size".into()))?;
            Model::ImplicitRnn(ImplicitRnn::new(core, input_dim, readout)?)
        }
        ModelKind::Mlp => {
            let mats: Vec<Matrix> = it.by_ref().collect();
            if mats.len() % 2 != 0 {
                return Err(Error::Format("MLP layers need a weight and a bias each".into()));
            }
            let (w, b): (Vec<_>, Vec<_>) = mats.chunks(2).map(|p| (p[0].clone(), p[1].clone())).unzip();
            Model::Mlp(MlpModel::from_parts(w, b, h.mlp_activation.unwrap_or_default())?)
        }
        ModelKind::Elman => {
            let m: Vec<Matrix> = it.by_ref().collect();
            let [w_ih, w_hh, b_h, w_ho, b_o]: [Matrix; 5] = m
                .try_into()
                .map_err(|_| Error::Format("Elman checkpoint needs five matrices".into()))?;
            Model::Elman(ElmanRnn {
                w_ih,
                w_hh,
                b_h,
                w_ho,
                b_o,
            })
        }
    };
    if it.next().is_some() {
        return Err(Error::Format("checkpoint holds more matrices than the model uses".into()));
    }
    Ok((model, h.meta))
}

pub fn save(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let bytes = to_bytes(model, meta)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(f).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
