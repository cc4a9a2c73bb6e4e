//! One JSON file configures a whole pipeline run.

use std::path::{Path, PathBuf};

use manic_core::agent::AgentConfig;
use manic_core::bootstrap::pretrain::TrainConfig;
use manic_core::contentment::{EvolveConfig, PreferenceConfig};
use manic_core::env::{EnvKind, NoiseConfig};
use manic_teacher::GenerateConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable that replaces `seed` after the file is read.
pub const SEED_ENV: &str = "MANIC_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub beliefs: PathBuf,
    pub model: PathBuf,
    pub contentment: PathBuf,
    pub trace: PathBuf,
    pub store: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        let run = PathBuf::from("run");
        Self {
            dataset: run.join("walk.mnc1"),
            beliefs: run.join("beliefs.mncb"),
            model: run.join("model"),
            contentment: run.join("h.mncm"),
            trace: run.join("trace.jsonl"),
            store: run.join("teacher"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveSettings {
    #[serde(flatten)]
    pub search: EvolveConfig,
    /// Episode length for each fitness evaluation.
    pub steps: usize,
    pub episodes: usize,
    /// Fitness is the negated mean distance of visited states to this point.
    pub target: Vec<f64>,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        Self {
            search: EvolveConfig::default(),
            steps: 50,
            episodes: 2,
            target: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeachSettings {
    pub port: u16,
    #[serde(flatten)]
    pub generate: GenerateConfig,
}

impl Default for TeachSettings {
    fn default() -> Self {
        Self {
            port: 8421,
            generate: GenerateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub noise: NoiseConfig,
    pub walk_steps: usize,
    /// Steps each random action is repeated during collection. Open layouts
    /// like the warehouse need long holds before a walk covers the floor.
    pub walk_hold: usize,
    pub belief_dims: usize,
    pub nldr_k: usize,
    pub train: TrainConfig,
    /// Extra supervised epochs run after pretraining.
    pub refine_epochs: usize,
    pub contentment_hidden: Vec<usize>,
    pub agent: AgentConfig,
    pub episode_steps: usize,
    pub preference: PreferenceConfig,
    pub evolve: EvolveSettings,
    pub teach: TeachSettings,
    /// Master seed; copied into every component when resolved.
    pub seed: u64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Crane,
            noise: NoiseConfig::default(),
            walk_steps: 1000,
            walk_hold: 1,
            belief_dims: 2,
            nldr_k: 48,
            train: TrainConfig::default(),
            refine_epochs: 20,
            contentment_hidden: vec![16],
            agent: AgentConfig::default(),
            episode_steps: 200,
            preference: PreferenceConfig::default(),
            evolve: EvolveSettings::default(),
            teach: TeachSettings::default(),
            seed: 0,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file; a missing path yields the defaults.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Applies the seed override from the environment and propagates the
    /// master seed into every component.
    pub fn resolve(mut self, env_seed: Option<&str>) -> CliResult<Self> {
        if let Some(raw) = env_seed {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        self.train.seed = self.seed;
        self.agent.seed = self.seed;
        self.preference.seed = self.seed;
        self.evolve.search.seed = self.seed;
        Ok(self)
    }

    /// Hex sha256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"env": "warehouse", "train": {"epochs": 3}}"#).unwrap();
        assert_eq!(cfg.env, EnvKind::Warehouse);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.rate, TrainConfig::default().rate);
        assert_eq!(cfg.nldr_k, 48);
    }

    #[test]
    fn seed_override_propagates() {
        let cfg = RunConfig::default().resolve(Some("17")).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.agent.seed), (17, 17, 17));
        assert!(RunConfig::default().resolve(Some("x")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.nldr_k = 9;
        assert_ne!(a.hash(), b.hash());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back.hash(), a.hash());
    }
}
