//! TOML configuration. Every table and key is optional; secrets are never
//! stored here, only the names of the environment variables that hold them.
//!
//! ```toml
//! data_dir = "data"
//! dataset = "default"
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! lease_minutes = 30
//! toy_checkpoint = "runs/grpo.ckpt"
//!
//! [sft]
//! learning_rate = 0.2
//!
//! [gateway.comparator]
//! endpoint = "http://localhost:9000/v1/chat/completions"
//! token_env = "COMPARATOR_TOKEN"
//! role = "comparator"
//! ```

use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

use creative_select::pipeline::{CollectionCriteria, SplitConfig};
use creative_select::tournament::TournamentConfig;
use creative_select::trainer::{GrpoConfig, SftConfig};

use crate::gateway::{GatewayConfig, GatewayRole};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("gateway.{key}: role is {role:?}")]
    RoleMismatch { key: String, role: GatewayRole },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub addr: String,
    pub lease_minutes: u64,
    /// Write `snapshot.json` after this many events.
    pub snapshot_every: u64,
    /// Environment variable with the static bearer token clients must send.
    pub bearer_token_env: Option<String>,
    /// Checkpoint used by the `toy` comparator.
    pub toy_checkpoint: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            lease_minutes: 30,
            snapshot_every: 100,
            bearer_token_env: None,
            toy_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub data_dir: PathBuf,
    pub dataset: String,
    pub collection: CollectionCriteria,
    pub split: SplitConfig,
    pub serve: ServeConfig,
    /// Keys left out fall back to the toy-scale preset, not the core default.
    #[serde(deserialize_with = "over_toy_sft")]
    pub sft: SftConfig,
    #[serde(deserialize_with = "over_toy_grpo")]
    pub grpo: GrpoConfig,
    pub tournament: TournamentConfig,
    /// Logit margin of the format-primed base policy that SFT starts from.
    pub base_margin: f64,
    /// Keyed by role name: `cot_polisher`, `comparator`, `judge`.
    pub gateway: BTreeMap<String, GatewayConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            dataset: "default".into(),
            collection: CollectionCriteria::default(),
            split: SplitConfig::default(),
            serve: ServeConfig::default(),
            sft: SftConfig::toy(),
            grpo: GrpoConfig::toy(),
            tournament: TournamentConfig::default(),
            base_margin: 6.0,
            gateway: BTreeMap::new(),
        }
    }
}

/// Deserializes a partial table on top of `base`.
fn overlay<'de, D, T>(d: D, base: T) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: Serialize + DeserializeOwned,
{
    let mut merged = serde_json::to_value(base).map_err(D::Error::custom)?;
    let patch = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
    let obj = merged.as_object_mut().expect("config structs serialize as maps");
    obj.extend(patch);
    serde_json::from_value(merged).map_err(D::Error::custom)
}

fn over_toy_sft<'de, D: Deserializer<'de>>(d: D) -> Result<SftConfig, D::Error> {
    overlay(d, SftConfig::toy())
}

fn over_toy_grpo<'de, D: Deserializer<'de>>(d: D) -> Result<GrpoConfig, D::Error> {
    overlay(d, GrpoConfig::toy())
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })
    }

    /// The gateway configured for `role`, if any.
    pub fn gateway_for(&self, role: GatewayRole) -> Result<Option<GatewayConfig>, ConfigError> {
        let key = match role {
            GatewayRole::CotPolisher => "cot_polisher",
            GatewayRole::Comparator => "comparator",
            GatewayRole::Judge => "judge",
        };
        match self.gateway.get(key) {
            None => Ok(None),
            Some(g) if g.role == role => Ok(Some(g.clone())),
            Some(g) => Err(ConfigError::RoleMismatch {
                key: key.into(),
                role: g.role,
            }),
        }
    }
}
