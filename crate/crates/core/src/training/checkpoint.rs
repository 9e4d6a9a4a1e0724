//! JSON model checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ligbind_tensor::Tensor;

use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::physics::PhysicsConfig;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointMeta {
    /// Epoch the parameters were taken from (0 for an untrained model).
    pub epoch: usize,
    pub seed: u64,
    pub train_loss: Option<f64>,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub schema_version: u64,
    pub model_config: ModelConfig,
    pub physics_config: PhysicsConfig,
    pub params: BTreeMap<String, StoredTensor>,
    pub meta: CheckpointMeta,
}

impl ModelCheckpoint {
    pub fn from_model(model: &Model, meta: CheckpointMeta) -> Self {
        let params = model
            .store
            .iter()
            .map(|(_, p)| {
                (
                    p.name.clone(),
                    StoredTensor {
                        shape: p.tensor.shape().to_vec(),
                        data: p.tensor.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            model_config: model.config.clone(),
            physics_config: model.physics.clone(),
            params,
            meta,
        }
    }

    /// Rebuilds the model, requiring exactly the parameter set and shapes the
    /// configuration defines.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::new(self.model_config.clone(), self.physics_config.clone(), 0).map_err(|e| match e {
            Error::Config(m) => Error::CorruptCheckpoint(format!("invalid configuration: {m}")),
            other => other,
        })?;
        if model.store.len() != self.params.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "expected {} parameter tensors, found {}",
                model.store.len(),
                self.params.len()
            )));
        }
        let ids: Vec<_> = model.store.iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in ids {
            let stored = self
                .params
                .get(&name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("parameter `{name}` is missing")))?;
            let t = Tensor::new(stored.shape.clone(), stored.data.clone())
                .map_err(|e| Error::CorruptCheckpoint(format!("parameter `{name}`: {e}")))?;
            if !t.is_finite() {
                return Err(Error::CorruptCheckpoint(format!("parameter `{name}` holds non-finite values")));
            }
            model
                .store
                .set(id, t)
                .map_err(|e| Error::CorruptCheckpoint(format!("parameter `{name}`: {e}")))?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::CorruptCheckpoint("missing integer `schema_version`".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let ckpt: Self = serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        // surface shape problems at load time rather than first use
        ckpt.to_model()?;
        Ok(ckpt)
    }
}

/// Writes via a temporary file in the same directory, then renames.
pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ckpt.to_json())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::from_json(&fs::read_to_string(path)?)
}
