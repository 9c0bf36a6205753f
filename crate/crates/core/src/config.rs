//! Run configuration: one TOML tree with dotted-path overrides, validated as
//! a whole before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arena::{ScenarioConfig, SimContext};
use crate::dynamics::{CatalogConfig, PhysicsConfig};
use crate::engagement::EngagementConfig;
use crate::error::{config_err, Error, Result};
use crate::qnet::NetworkConfig;
use crate::replay::PerConfig;
use crate::rewards::RewardConfig;
use crate::trainer::TrainerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every named random stream.
    pub seed: u64,
    pub out: PathBuf,
    pub physics: PhysicsConfig,
    pub catalog: CatalogConfig,
    pub engagement: EngagementConfig,
    pub rewards: RewardConfig,
    pub network: NetworkConfig,
    pub trainer: TrainerConfig,
    pub replay: PerConfig,
    pub scenario: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            physics: PhysicsConfig::default(),
            catalog: CatalogConfig::default(),
            engagement: EngagementConfig::default(),
            rewards: RewardConfig::default(),
            network: NetworkConfig::default(),
            trainer: TrainerConfig::default(),
            replay: PerConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML text, applies `key.path=value` overrides in order, then
    /// validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err("<file>", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(tree)).map_err(|e| {
            let path = e.path().to_string();
            config_err(path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides)
    }

    /// Defaults plus overrides, for runs without a file.
    pub fn with_overrides(overrides: &[String]) -> Result<Self> {
        Self::from_toml_str("", overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_context()?;
        self.scenario.validate(&self.engagement)?;
        self.network.validate()?;
        self.trainer.validate()?;
        self.replay.validate()
    }

    pub fn sim_context(&self) -> Result<SimContext> {
        SimContext::new(
            self.physics.clone(),
            self.catalog.clone(),
            self.engagement.clone(),
            self.rewards.clone(),
        )
    }

    /// Hex SHA-256 of the canonical JSON form with the output directory
    /// blanked, so relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolved configuration as TOML; loading it back yields `self`.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            path: "<resolved>".into(),
            reason: e.to_string(),
        })
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML value
/// and falls back to a bare string.
pub fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(spec, "override must look like key.path=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config_err(key, "empty key segment"));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut node = tree;
    let mut walked = String::new();
    for p in parts {
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(p);
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| config_err(walked.clone(), "not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
