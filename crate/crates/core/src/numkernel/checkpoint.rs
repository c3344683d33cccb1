//! `mcie-ckpt-1` parameter checkpoints.
//!
//! A checkpoint is a JSON document:
//!
//! ```json
//! {"version": "mcie-ckpt-1", "meta": {...}, "params": [{"name": "...", "shape": [..], "values": [..]}]}
//! ```
//!
//! Values are written with shortest round-trip formatting and parsed with
//! correct rounding, so save/load is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor, TensorError};

pub const CHECKPOINT_VERSION: &str = "mcie-ckpt-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    /// Free-form metadata (model configuration, training phase, ...).
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            meta: BTreeMap::new(),
            params: store
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        if let Ok(v) = serde_json::to_value(value) {
            self.meta.insert(key.to_string(), v);
        }
        self
    }

    /// Rebuilds a store with the recorded names, order and values.
    pub fn to_store(&self) -> Result<ParamStore, TensorError> {
        self.check_version()?;
        let mut store = ParamStore::new();
        for p in &self.params {
            store.register(p.name.clone(), Tensor::new(&p.shape, p.values.clone())?)?;
        }
        Ok(store)
    }

    /// Copies values into an existing store built by model construction.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), TensorError> {
        let loaded = self.to_store()?;
        store.load_values_from(&loaded)
    }

    fn check_version(&self) -> Result<(), TensorError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported checkpoint version {:?}, expected {CHECKPOINT_VERSION:?}",
                self.version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, TensorError> {
        let ckpt: Self = serde_json::from_str(s).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        ckpt.check_version()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        let s = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&s)
    }
}
