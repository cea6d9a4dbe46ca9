use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numkit::{AdamW, ParamSet};
use crate::pushmini::NormBundle;

use super::EffectiveConfig;

pub const CHECKPOINT_FORMAT: &str = "xdomain-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state as a JSON document. Floats are written in
/// shortest round-trip form, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub step: u64,
    pub model_config: ModelConfig,
    pub params: ParamSet,
    pub optimizer: AdamW,
    pub norm: NormBundle,
}

impl Checkpoint {
    pub fn new(effective: &EffectiveConfig, model: &Model, optimizer: &AdamW, norm: &NormBundle) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: effective.hash(),
            step: optimizer.steps_taken(),
            model_config: model.config.clone(),
            params: model.params.clone(),
            optimizer: optimizer.clone(),
            norm: norm.clone(),
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_params(self.model_config.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                "checkpoint",
                format!("unsupported format {} v{}", c.format, c.version),
            ));
        }
        c.model()?;
        Ok(c)
    }

    /// Writes to a sibling temporary file and renames it into place, so a
    /// crash never leaves a truncated checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json() + "\n").map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
