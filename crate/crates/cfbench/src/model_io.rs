//! Model files: calibrated physics parameters (TOML) and trained learners
//! (JSON).

use std::collections::BTreeMap;
use std::path::Path;

use cfbench_core::learners::{LearnerKind, TrainedRegressor};
use cfbench_core::models::{AccModel, AccParameters, IdmModel, IdmParameters, PhysicsKind};
use serde::{Deserialize, Serialize};

use crate::config::{read_toml, write_toml};
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "cfbench-params";
pub const MODEL_FORMAT: &str = "cfbench-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub kind: PhysicsKind,
    pub seed: u64,
    /// Training-pair MSE of the calibrated parameters.
    pub train_mse: f64,
    /// MSE on the validation split, when it has pairs.
    #[serde(default)]
    pub validation_mse: Option<f64>,
    pub parameters: BTreeMap<String, f64>,
}

impl ParamsFile {
    pub fn new(kind: PhysicsKind, values: &[f64], seed: u64, train_mse: f64, validation_mse: Option<f64>) -> Self {
        let parameters = kind
            .parameter_names()
            .iter()
            .zip(values)
            .map(|(n, v)| (n.to_string(), *v))
            .collect();
        Self {
            format: PARAMS_FORMAT.into(),
            version: FORMAT_VERSION,
            kind,
            seed,
            train_mse,
            validation_mse,
            parameters,
        }
    }

    /// Parameter vector in the model's order.
    pub fn values(&self) -> std::result::Result<Vec<f64>, String> {
        let names = self.kind.parameter_names();
        if let Some(extra) = self.parameters.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(format!("unknown {} parameter `{extra}`", self.kind));
        }
        names
            .iter()
            .map(|n| {
                self.parameters
                    .get(*n)
                    .copied()
                    .ok_or_else(|| format!("missing {} parameter `{n}`", self.kind))
            })
            .collect()
    }
}

pub fn save_params(path: &Path, file: &ParamsFile) -> Result<()> {
    write_toml(path, file)
}

pub fn load_params(path: &Path) -> Result<ParamsFile> {
    let f: ParamsFile = read_toml(path)?;
    if f.format != PARAMS_FORMAT || f.version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("expected {PARAMS_FORMAT} version {FORMAT_VERSION}, got {} version {}", f.format, f.version),
        ));
    }
    f.values().map_err(|m| Error::format(path, m))?;
    Ok(f)
}

/// A ready-to-run physics model.
pub enum PhysicsModel {
    Idm(IdmModel),
    Acc(AccModel),
}

pub fn physics_model(path: &Path) -> Result<PhysicsModel> {
    let f = load_params(path)?;
    let v = f.values().map_err(|m| Error::format(path, m))?;
    let bad = |e: cfbench_core::models::ModelError| Error::format(path, e.to_string());
    Ok(match f.kind {
        PhysicsKind::Idm => PhysicsModel::Idm(IdmModel::new(IdmParameters::from_slice(&v).map_err(bad)?)),
        PhysicsKind::Acc => PhysicsModel::Acc(AccModel::new(AccParameters::from_slice(&v).map_err(bad)?)),
    })
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    format: &'a str,
    version: u32,
    kind: LearnerKind,
    model: &'a TrainedRegressor,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFileIn {
    format: String,
    version: u32,
    kind: LearnerKind,
    model: TrainedRegressor,
}

pub fn save_learner(path: &Path, model: &TrainedRegressor) -> Result<()> {
    let out = ModelFileOut {
        format: MODEL_FORMAT,
        version: FORMAT_VERSION,
        kind: model.kind(),
        model,
    };
    let text = serde_json::to_string(&out).map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_learner(path: &Path) -> Result<TrainedRegressor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let f: ModelFileIn = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if f.format != MODEL_FORMAT || f.version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("expected {MODEL_FORMAT} version {FORMAT_VERSION}, got {} version {}", f.format, f.version),
        ));
    }
    if f.kind != f.model.kind() {
        return Err(Error::format(path, format!("file says {} but holds a {} model", f.kind, f.model.kind())));
    }
    Ok(f.model)
}
