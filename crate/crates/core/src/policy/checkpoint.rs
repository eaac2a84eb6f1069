use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::Path;

use super::{FeatureSpec, PolicyError, ToyPolicy, Vocabulary};

pub const CHECKPOINT_FORMAT: &str = "toy-policy-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Base,
    CotSft,
    Grpo,
}

/// Self-contained policy file: vocabulary, feature spec, and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub stage: Stage,
    pub vocab: Vocabulary,
    pub spec: FeatureSpec,
    pub temperature: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {0:?}")]
    Format(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl Checkpoint {
    pub fn to_policy(&self) -> Result<ToyPolicy, PolicyError> {
        ToyPolicy::new(self.vocab.clone(), self.spec.clone(), self.temperature)?.with_weights(self.weights.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let ckpt: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(ckpt.format));
        }
        ckpt.to_policy()?;
        Ok(ckpt)
    }
}
