//! Self-describing JSON model files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::transformer::{KemenyTransformer, ModelConfig};

pub const CHECKPOINT_FORMAT: &str = "kemeny-transformer";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub epochs_completed: usize,
    pub seed: u64,
    #[serde(default)]
    pub baseline_replacements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub config: ModelConfig,
    pub metadata: CheckpointMetadata,
    pub params: ParamStore<S>,
}

#[derive(Serialize, Deserialize)]
struct StoredParam<S> {
    shape: [usize; 2],
    data: Vec<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct StoredCheckpoint<S> {
    format: String,
    version: u32,
    dtype: String,
    config: ModelConfig,
    metadata: CheckpointMetadata,
    parameters: BTreeMap<String, StoredParam<S>>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn from_model(model: &KemenyTransformer<S>, metadata: CheckpointMetadata) -> Self {
        Self {
            config: model.config().clone(),
            metadata,
            params: model.params().clone(),
        }
    }

    pub fn into_model(self) -> Result<KemenyTransformer<S>> {
        KemenyTransformer::from_params(self.config, self.params)
    }

    pub fn to_json(&self) -> Result<String> {
        let parameters = self
            .params
            .iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    StoredParam {
                        shape: t.shape(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        let stored = StoredCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dtype: S::DTYPE.into(),
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            parameters,
        };
        serde_json::to_string(&stored).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::CorruptCheckpoint(format!("unknown format {:?}", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if header.dtype != S::DTYPE {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint stores {}, requested {}",
                header.dtype,
                S::DTYPE
            )));
        }
        let stored: StoredCheckpoint<S> =
            serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let mut named = Vec::with_capacity(stored.parameters.len());
        for (name, p) in stored.parameters {
            let t = Tensor::from_vec(p.shape[0], p.shape[1], p.data).map_err(|_| {
                Error::CorruptCheckpoint(format!("parameter {name}: data does not match shape {:?}", p.shape))
            })?;
            named.push((name, t));
        }
        let params = ParamStore::from_named(named)?;
        // Reject parameter sets that do not fit the stored config.
        KemenyTransformer::from_params(stored.config.clone(), params.clone())?;
        Ok(Self {
            config: stored.config,
            metadata: stored.metadata,
            params,
        })
    }
}

pub fn save_checkpoint<S: Scalar>(checkpoint: &Checkpoint<S>, path: &Path) -> Result<()> {
    let text = checkpoint.to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

/// Loads a checkpoint and insists that its config equals `expected`.
pub fn load_checkpoint_for<S: Scalar>(path: &Path, expected: &ModelConfig) -> Result<Checkpoint<S>> {
    let ck = load_checkpoint::<S>(path)?;
    if &ck.config != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint config {:?} differs from requested {:?}",
            ck.config, expected
        )));
    }
    Ok(ck)
}
