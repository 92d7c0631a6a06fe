//! Flat, named parameter dumps.
//!
//! A checkpoint is one JSON document:
//!
//! ```json
//! {"format":"marn-checkpoint","version":1,"model":{...},
//!  "params":[{"name":"lsthm.language.W_i","shape":[8,4],"values":[...]}, ...]}
//! ```
//!
//! Parameters appear in store order. Loading rebuilds the layout from a
//! [`MarnConfig`] and requires every name and shape to match it exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Marn, MarnConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT: &str = "marn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error("checkpoint does not match the model configuration: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    model: MarnConfig,
    params: Vec<Entry>,
}

pub fn save_checkpoint(mut writer: impl Write, cfg: &MarnConfig, store: &ParamStore) -> Result<(), CheckpointError> {
    let doc = Document {
        format: FORMAT.into(),
        version: VERSION,
        model: cfg.clone(),
        params: store
            .iter()
            .map(|(name, t)| Entry { name: name.into(), shape: t.shape().to_vec(), values: t.data().to_vec() })
            .collect(),
    };
    serde_json::to_writer(&mut writer, &doc)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Reads a checkpoint and checks it against the layout implied by `cfg`.
pub fn load_checkpoint(reader: impl Read, cfg: &MarnConfig) -> Result<ParamStore, CheckpointError> {
    let doc: Document = serde_json::from_reader(reader)?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(CheckpointError::Format { format: doc.format, version: doc.version });
    }
    let (_, mut store) = Marn::layout(cfg)?;
    if doc.params.len() != store.len() {
        return Err(CheckpointError::Mismatch(format!(
            "expected {} parameter tensors, found {}",
            store.len(),
            doc.params.len()
        )));
    }
    for (id, entry) in store.ids().collect::<Vec<_>>().into_iter().zip(doc.params) {
        let expected_name = store.name(id).to_string();
        if entry.name != expected_name {
            return Err(CheckpointError::Mismatch(format!("expected {expected_name}, found {}", entry.name)));
        }
        let expected_shape = store.value(id).shape().to_vec();
        if entry.shape != expected_shape {
            return Err(CheckpointError::Mismatch(format!(
                "{}: shape {:?}, expected {:?}",
                entry.name, entry.shape, expected_shape
            )));
        }
        let tensor = Tensor::new(entry.shape, entry.values)
            .map_err(|e| CheckpointError::Mismatch(format!("{expected_name}: {e}")))?;
        store.set(&expected_name, tensor)?;
    }
    Ok(store)
}
