//! JSON model checkpoints. Floats are written in shortest round-trip form
//! and parsed back exactly, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FnnParams, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "secbw-gnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: FnnParams,
    pub train_config: TrainConfig,
    pub seed: u64,
    /// Budget the model was trained for; evaluation refuses a mismatch.
    pub total_bandwidth_hz: f64,
}

impl Checkpoint {
    pub fn new(params: FnnParams, train_config: TrainConfig, total_bandwidth_hz: f64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed: train_config.seed,
            params,
            train_config,
            total_bandwidth_hz,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("checkpoint", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::format("checkpoint", format!("unexpected format tag `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {}", ckpt.version)));
        }
        ckpt.params.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
