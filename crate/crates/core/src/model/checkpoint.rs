//! Checkpoint file format (JSON, versioned).
//!
//! ```json
//! {
//!   "format": "tsdet-checkpoint",
//!   "version": 1,
//!   "model": { ...ModelConfig... },
//!   "frontend": { ...FrontendConfig... },
//!   "class_names": ["air_conditioner", ...],
//!   "params": [ { "name": "encoder.stem.weight", "shape": [16, 48], "data": [...] }, ... ]
//! }
//! ```
//!
//! Parameters are listed in the model's visit order. Loading fails when the
//! stored config differs from the expected one, or when any parameter name or
//! shape does not match the freshly constructed model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};
use crate::nn::Module;
use crate::signal::FrontendConfig;

use super::{ModelConfig, TsdModel};

pub const CHECKPOINT_FORMAT: &str = "tsdet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    pub class_names: Vec<String>,
    pub params: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &mut TsdModel, frontend: FrontendConfig, class_names: Vec<String>) -> Self {
        let mut params = Vec::new();
        model.visit_params("", &mut |p| {
            params.push(StoredTensor {
                name: p.name,
                shape: p.shape,
                data: p.value.to_vec(),
            })
        });
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.config().clone(),
            frontend,
            class_names,
            params,
        }
    }

    /// Rebuilds the model. `expected`, when given, must equal the stored config.
    pub fn into_model(self, expected: Option<&ModelConfig>) -> Result<(TsdModel, FrontendConfig, Vec<String>)> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(TsdError::CheckpointMismatch(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(TsdError::CheckpointMismatch(format!(
                "version {} (supported: {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if let Some(exp) = expected {
            if exp != &self.model {
                return Err(TsdError::CheckpointMismatch(
                    "stored model config differs from the requested one".into(),
                ));
            }
        }
        if self.class_names.len() != self.model.n_classes {
            return Err(TsdError::CheckpointMismatch(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.model.n_classes
            )));
        }
        let mut model = TsdModel::new(&self.model, 0)?;
        let mut stored = self.params.into_iter();
        let mut err = None;
        model.visit_params("", &mut |p| {
            if err.is_some() {
                return;
            }
            match stored.next() {
                Some(t) if t.name == p.name && t.shape == p.shape && t.data.len() == p.value.len() => {
                    p.value.copy_from_slice(&t.data);
                }
                Some(t) => {
                    err = Some(format!("parameter `{}` {:?} does not match `{}` {:?}", t.name, t.shape, p.name, p.shape))
                }
                None => err = Some(format!("missing parameter `{}`", p.name)),
            }
        });
        if let Some(e) = err {
            return Err(TsdError::CheckpointMismatch(e));
        }
        if let Some(extra) = stored.next() {
            return Err(TsdError::CheckpointMismatch(format!("unexpected parameter `{}`", extra.name)));
        }
        Ok((model, self.frontend, self.class_names))
    }
}

/// Writes the checkpoint atomically (temporary file, then rename).
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &mut TsdModel,
    frontend: FrontendConfig,
    class_names: &[String],
) -> Result<()> {
    let ck = Checkpoint::from_model(model, frontend, class_names.to_vec());
    crate::io::write_atomic(path.as_ref(), serde_json::to_string(&ck)?.as_bytes())
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<(TsdModel, FrontendConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model(expected)
}
