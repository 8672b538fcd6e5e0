//! JSON checkpoints for trained flows.
//!
//! Masks are not stored: they are regenerated from `(architecture, rng_seed)`
//! and the stored weights must vanish wherever the regenerated mask does.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::maf::{FlowArchitecture, MafModel, Standardizer};
use crate::error::{Error, Result};
use crate::stats::{StatKind, StatsConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub stat_set: Vec<StatKind>,
    pub decay: f64,
    pub standardizer: Standardizer,
    pub architecture: FlowArchitecture,
    pub parameters: Vec<ParamTensor>,
    pub rng_seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &MafModel, stats: &StatsConfig) -> Result<Self> {
        Error::check_dim(stats.dim(), model.p())?;
        let mut parameters = Vec::new();
        for (t, made) in model.transforms.iter().enumerate() {
            for (l, (w, b)) in made.weights.iter().zip(&made.biases).enumerate() {
                parameters.push(ParamTensor {
                    name: format!("transform_{t}.layer_{l}.weight"),
                    shape: vec![w.nrows(), w.ncols()],
                    data: w.iter().copied().collect(),
                });
                parameters.push(ParamTensor {
                    name: format!("transform_{t}.layer_{l}.bias"),
                    shape: vec![b.len()],
                    data: b.to_vec(),
                });
            }
        }
        Ok(Checkpoint {
            format_version: FORMAT_VERSION,
            stat_set: stats.stat_set().to_vec(),
            decay: stats.decay(),
            standardizer: model.standardizer.clone(),
            architecture: model.arch.clone(),
            parameters,
            rng_seed: model.rng_seed,
        })
    }

    pub fn into_model(self) -> Result<(MafModel, StatsConfig)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let stats = StatsConfig::new(self.decay, self.stat_set)?;
        let mut model = MafModel::new(self.architecture, self.standardizer, self.rng_seed)?;
        Error::check_dim(stats.dim(), model.p())?;
        let expected: usize = model.transforms.iter().map(|t| 2 * t.weights.len()).sum();
        Error::check_dim(expected, self.parameters.len())?;
        let mut tensors = self.parameters.into_iter();
        for (t, made) in model.transforms.iter_mut().enumerate() {
            for l in 0..made.weights.len() {
                let w = tensors.next().expect("count checked");
                let b = tensors.next().expect("count checked");
                check_tensor(&w, &format!("transform_{t}.layer_{l}.weight"), made.weights[l].dim())?;
                check_tensor(&b, &format!("transform_{t}.layer_{l}.bias"), (made.biases[l].len(), 0))?;
                let arr = Array2::from_shape_vec(made.weights[l].dim(), w.data).expect("shape checked");
                if arr.iter().zip(made.masks[l].iter()).any(|(v, m)| *m == 0.0 && *v != 0.0) {
                    return Err(Error::Parse(format!(
                        "{}: nonzero weight under a zero mask (rng_seed does not match)",
                        w.name
                    )));
                }
                made.weights[l] = arr;
                made.biases[l] = b.data.into();
            }
        }
        Ok((model, stats))
    }
}

fn check_tensor(t: &ParamTensor, name: &str, dims: (usize, usize)) -> Result<()> {
    let shape = if dims.1 == 0 { vec![dims.0] } else { vec![dims.0, dims.1] };
    if t.name != name || t.shape != shape {
        return Err(Error::Parse(format!(
            "expected tensor {name} with shape {shape:?}, found {} with shape {:?}",
            t.name, t.shape
        )));
    }
    Error::check_dim(shape.iter().product(), t.data.len())?;
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

pub fn save_checkpoint(model: &MafModel, stats: &StatsConfig, path: &Path) -> Result<()> {
    let ck = Checkpoint::from_model(model, stats)?;
    fs::write(path, serde_json::to_string_pretty(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MafModel, StatsConfig)> {
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    ck.into_model()
}
