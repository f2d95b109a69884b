use sha2::{Digest, Sha256};

use super::ExperimentName;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::kv::{render_section, KvMap};
use crate::ppo::PpoConfig;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub seed: u64,
    /// Environment steps between snapshots; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl ExperimentConfig {
    /// Defaults for `name`, with the environment matching its game.
    pub fn new(name: ExperimentName) -> Self {
        ExperimentConfig {
            name,
            seed: 0,
            checkpoint_every: 0,
            env: EnvConfig::new(name.game),
            ppo: PpoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.game != self.name.game {
            return Err(Error::Config(format!(
                "env.game = {} contradicts experiment {}",
                self.env.game, self.name
            )));
        }
        self.env.validate()?;
        self.ppo.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let name: ExperimentName = kv
            .get("experiment.name")?
            .ok_or_else(|| Error::Config("missing `name` in [experiment]".into()))?;
        let env = EnvConfig::read_kv_or(&kv, "env.", name.game)?;
        let cfg = ExperimentConfig {
            name,
            seed: kv.get_or("experiment.seed", 0)?,
            checkpoint_every: kv.get_or("experiment.checkpoint_every", 0)?,
            env,
            ppo: PpoConfig::read_kv(&kv, "ppo.")?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical rendering; every key is written so the text fully pins the run.
    pub fn to_text(&self) -> String {
        let exp = [
            ("name", self.name.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ];
        [
            render_section(Some("experiment"), &exp),
            render_section(Some("env"), &self.env.to_pairs()),
            render_section(Some("ppo"), &self.ppo.to_pairs()),
        ]
        .join("\n")
    }

    /// SHA-256 of [`ExperimentConfig::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
