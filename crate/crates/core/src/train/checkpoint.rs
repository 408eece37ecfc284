//! Checkpoint directories: `manifest.json` plus a flat `weights.bin`.
//!
//! `weights.bin` is every tensor in manifest order as little-endian f64,
//! row-major. Offsets in the manifest count f64 elements and must be
//! contiguous. Optimizer moments, when present, follow the parameters
//! under `adam.m.*` and `adam.v.*` names.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::AdamState;
use super::TrainConfig;
use crate::featurize::FEATURE_SCHEMA_VERSION;
use crate::gat::{HeadKind, Model, ModelConfig, ModelKind, Params};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checkpoint schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("feature schema '{found}', expected '{expected}'")]
    FeatureSchema { found: String, expected: String },
    #[error("tensor layout: {0}")]
    Layout(String),
    #[error("weights.bin holds {found} bytes, manifest needs {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint has a {found} head, {expected} was requested")]
    HeadMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("checkpoint holds a {found} model, {expected} was requested")]
    ModelMismatch {
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResumeInfo {
    pub epochs_completed: usize,
    pub adam_step: u64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub feature_schema_version: String,
    pub model: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub resume: Option<ResumeInfo>,
}

/// Optimizer state needed to continue training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState<T> {
    pub epochs_completed: usize,
    pub adam: AdamState<T>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub training: Option<TrainingState<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn expect_head(&self, head: HeadKind) -> Result<(), CheckpointError> {
        if self.model.config.head != head {
            return Err(CheckpointError::HeadMismatch {
                expected: head.as_str(),
                found: self.model.config.head.as_str(),
            });
        }
        Ok(())
    }

    pub fn expect_model(&self, model: ModelKind) -> Result<(), CheckpointError> {
        if self.model.config.model != model {
            return Err(CheckpointError::ModelMismatch {
                expected: model.as_str(),
                found: self.model.config.model.as_str(),
            });
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn named_tensors<T: Scalar>(ck: &Checkpoint<T>) -> Vec<(String, &Tensor<T>)> {
    let names = ck.model.params.named();
    let mut out: Vec<(String, &Tensor<T>)> = names.iter().map(|(n, t)| (n.clone(), *t)).collect();
    if let Some(tr) = &ck.training {
        for (prefix, moments) in [("adam.m", &tr.adam.m), ("adam.v", &tr.adam.v)] {
            for ((n, _), t) in names.iter().zip(moments) {
                out.push((format!("{prefix}.{n}"), t));
            }
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(
    dir: impl AsRef<Path>,
    ck: &Checkpoint<T>,
) -> Result<(), CheckpointError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    let mut offset = 0;
    for (name, t) in named_tensors(ck) {
        entries.push(TensorEntry {
            name,
            shape: [t.rows(), t.cols()],
            offset,
        });
        offset += t.len();
        for &v in t.data() {
            payload.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let manifest = Manifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        feature_schema_version: FEATURE_SCHEMA_VERSION.to_string(),
        model: ck.model.config.clone(),
        tensors: entries,
        resume: ck.training.as_ref().map(|t| ResumeInfo {
            epochs_completed: t.epochs_completed,
            adam_step: t.adam.t,
            config: t.config.clone(),
        }),
    };
    let weights = dir.join(WEIGHTS_FILE);
    fs::write(&weights, payload).map_err(io_err(&weights))?;
    let mpath = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(io_err(&mpath))?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest, CheckpointError> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(CheckpointError::SchemaVersion {
            found: m.schema_version,
            expected: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    if m.feature_schema_version != FEATURE_SCHEMA_VERSION {
        return Err(CheckpointError::FeatureSchema {
            found: m.feature_schema_version,
            expected: FEATURE_SCHEMA_VERSION.to_string(),
        });
    }
    Ok(m)
}

pub fn load_checkpoint<T: Scalar>(dir: impl AsRef<Path>) -> Result<Checkpoint<T>, CheckpointError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let template = Model::<T>::init(manifest.model.clone(), 0, 0.0)
        .map_err(|e| CheckpointError::Layout(e.to_string()))?;
    let names: Vec<(String, (usize, usize))> = template
        .params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    let mut expected: Vec<(String, (usize, usize))> = names.clone();
    if manifest.resume.is_some() {
        for prefix in ["adam.m", "adam.v"] {
            expected.extend(names.iter().map(|(n, s)| (format!("{prefix}.{n}"), *s)));
        }
    }
    if manifest.tensors.len() != expected.len() {
        return Err(CheckpointError::Layout(format!(
            "{} tensors listed, {} expected",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut offset = 0;
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
        if &entry.name != name || (entry.shape[0], entry.shape[1]) != *shape {
            return Err(CheckpointError::Layout(format!(
                "entry '{}' {:?} does not match '{}' {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        if entry.offset != offset {
            return Err(CheckpointError::Layout(format!(
                "entry '{}' at offset {}, expected {}",
                entry.name, entry.offset, offset
            )));
        }
        offset += shape.0 * shape.1;
    }
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(io_err(&wpath))?;
    if bytes.len() != offset * 8 {
        return Err(CheckpointError::Truncated {
            expected: offset * 8,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut tensors: Vec<Tensor<T>> = manifest
        .tensors
        .iter()
        .map(|e| {
            let len = e.shape[0] * e.shape[1];
            let data = values[e.offset..e.offset + len]
                .iter()
                .map(|&v| T::of(v))
                .collect();
            Tensor::new(e.shape[0], e.shape[1], data).expect("length checked")
        })
        .collect();
    let n = names.len();
    let training = match &manifest.resume {
        None => None,
        Some(r) => {
            let v = tensors.split_off(2 * n);
            let m = tensors.split_off(n);
            Some(TrainingState {
                epochs_completed: r.epochs_completed,
                adam: AdamState {
                    m,
                    v,
                    t: r.adam_step,
                },
                config: r.config.clone(),
            })
        }
    };
    let params = Params::from_slots(&template.params, tensors)
        .ok_or_else(|| CheckpointError::Layout("parameter count".into()))?;
    Ok(Checkpoint {
        model: Model {
            config: manifest.model,
            params,
        },
        training,
    })
}
