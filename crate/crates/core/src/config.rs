//! Workbench configuration: one TOML document with a section per component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{ActuatorConfig, AeroConfig};
use crate::env::{EpisodeConfig, MissileEnv, RewardConfig, Thresholds};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::replay::ReplayConfig;
use crate::signal::ReferenceModelConfig;
use crate::train::{CurriculumConfig, NetworkConfig, RobustifyConfig, TrainSettings};
use crate::trpo::TrpoConfig;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "AUTOPILOT_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub seed: u64,
    /// Episode budget of a training run.
    pub episodes: u64,
    pub output_dir: PathBuf,
    pub execution: Execution,
    pub aero: AeroConfig,
    pub actuator: ActuatorConfig,
    pub reference: ReferenceModelConfig,
    pub reward: RewardConfig,
    pub network: NetworkConfig,
    pub trpo: TrpoConfig,
    pub replay: ReplayConfig,
    pub curriculum: CurriculumConfig,
    pub robustify: RobustifyConfig,
    pub episode: EpisodeConfig,
    pub thresholds: Thresholds,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 5000,
            output_dir: PathBuf::from("runs"),
            execution: Execution::default(),
            aero: AeroConfig::default(),
            actuator: ActuatorConfig::default(),
            reference: ReferenceModelConfig::default(),
            reward: RewardConfig::default(),
            network: NetworkConfig::default(),
            trpo: TrpoConfig::default(),
            replay: ReplayConfig::default(),
            curriculum: CurriculumConfig::default(),
            robustify: RobustifyConfig::default(),
            episode: EpisodeConfig::default(),
            thresholds: Thresholds::default(),
        }
    }
}

/// The parts of the configuration that define what a trained agent is.
#[derive(Serialize)]
struct ModelDefinition<'a> {
    aero: &'a AeroConfig,
    actuator: &'a ActuatorConfig,
    reference: &'a ReferenceModelConfig,
    reward: &'a RewardConfig,
    network: &'a NetworkConfig,
    trpo: &'a TrpoConfig,
    replay: &'a ReplayConfig,
    curriculum: &'a CurriculumConfig,
    episode: &'a EpisodeConfig,
    thresholds: &'a Thresholds,
}

impl WorkbenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.aero.validate()?;
        self.actuator.validate()?;
        self.reference.validate()?;
        self.reward.validate()?;
        self.network.validate()?;
        self.trpo.validate()?;
        self.replay.validate()?;
        self.curriculum.validate()?;
        self.robustify.validate()?;
        self.episode.validate()?;
        Ok(())
    }

    /// Applies [`OUTPUT_DIR_ENV`] when set.
    pub fn apply_env_overrides(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn env(&self) -> MissileEnv {
        MissileEnv {
            aero: self.aero.clone(),
            actuator: self.actuator.clone(),
            reference: self.reference.clone(),
            reward: self.reward.clone(),
            episode: self.episode.clone(),
            thresholds: self.thresholds,
        }
    }

    pub fn settings(&self) -> TrainSettings {
        TrainSettings {
            seed: self.seed,
            execution: self.execution,
            network: self.network.clone(),
            trpo: self.trpo.clone(),
            replay: self.replay.clone(),
            curriculum: self.curriculum.clone(),
        }
    }

    /// SHA-256 over the model-defining sections. Seed, budget, output
    /// location, execution mode and robustify settings are excluded, so a
    /// robustified agent keeps the digest of the nominal one it came from.
    pub fn digest(&self) -> String {
        let def = ModelDefinition {
            aero: &self.aero,
            actuator: &self.actuator,
            reference: &self.reference,
            reward: &self.reward,
            network: &self.network,
            trpo: &self.trpo,
            replay: &self.replay,
            curriculum: &self.curriculum,
            episode: &self.episode,
            thresholds: &self.thresholds,
        };
        let json = serde_json::to_vec(&def).expect("plain data serialises");
        hex::encode(Sha256::digest(&json))
    }
}
