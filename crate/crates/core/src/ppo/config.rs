use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    /// Environment steps summed over all env slots.
    pub total_steps: u64,
    pub learning_rate: f64,
    pub anneal_lr: bool,
    pub n_envs: usize,
    pub rollout_len: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub clip_value_loss: bool,
    pub normalize_adv: bool,
    pub ent_coef_action: f64,
    pub ent_coef_message: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            total_steps: 2_000_000_000,
            learning_rate: 2.5e-4,
            anneal_lr: true,
            n_envs: 128,
            rollout_len: 32,
            minibatches: 4,
            epochs: 4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.1,
            clip_value_loss: true,
            normalize_adv: true,
            ent_coef_action: 0.01,
            ent_coef_message: 0.002,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn batch_size(&self) -> usize {
        self.n_envs * self.rollout_len
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_size() / self.minibatches
    }

    pub fn steps_per_iteration(&self) -> u64 {
        self.batch_size() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_envs == 0 || self.rollout_len == 0 {
            return bad("n_envs and rollout_len must be positive");
        }
        if self.minibatches == 0 || self.minibatches > self.n_envs {
            return bad("minibatches must be in 1..=n_envs");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.clip <= 0.0 || self.learning_rate < 0.0 || self.max_grad_norm <= 0.0 {
            return bad("clip and max_grad_norm must be positive, learning_rate non-negative");
        }
        Ok(())
    }

    pub fn read_kv(kv: &KvMap, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let key = |k: &str| format!("{prefix}{k}");
        let cfg = PpoConfig {
            total_steps: kv.get_or(&key("total_steps"), d.total_steps)?,
            learning_rate: kv.get_or(&key("learning_rate"), d.learning_rate)?,
            anneal_lr: kv.get_or(&key("anneal_lr"), d.anneal_lr)?,
            n_envs: kv.get_or(&key("n_envs"), d.n_envs)?,
            rollout_len: kv.get_or(&key("rollout_len"), d.rollout_len)?,
            minibatches: kv.get_or(&key("minibatches"), d.minibatches)?,
            epochs: kv.get_or(&key("epochs"), d.epochs)?,
            gamma: kv.get_or(&key("gamma"), d.gamma)?,
            gae_lambda: kv.get_or(&key("gae_lambda"), d.gae_lambda)?,
            clip: kv.get_or(&key("clip"), d.clip)?,
            clip_value_loss: kv.get_or(&key("clip_value_loss"), d.clip_value_loss)?,
            normalize_adv: kv.get_or(&key("normalize_adv"), d.normalize_adv)?,
            ent_coef_action: kv.get_or(&key("ent_coef_action"), d.ent_coef_action)?,
            ent_coef_message: kv.get_or(&key("ent_coef_message"), d.ent_coef_message)?,
            vf_coef: kv.get_or(&key("vf_coef"), d.vf_coef)?,
            max_grad_norm: kv.get_or(&key("max_grad_norm"), d.max_grad_norm)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("total_steps", self.total_steps.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("anneal_lr", self.anneal_lr.to_string()),
            ("n_envs", self.n_envs.to_string()),
            ("rollout_len", self.rollout_len.to_string()),
            ("minibatches", self.minibatches.to_string()),
            ("epochs", self.epochs.to_string()),
            ("gamma", self.gamma.to_string()),
            ("gae_lambda", self.gae_lambda.to_string()),
            ("clip", self.clip.to_string()),
            ("clip_value_loss", self.clip_value_loss.to_string()),
            ("normalize_adv", self.normalize_adv.to_string()),
            ("ent_coef_action", self.ent_coef_action.to_string()),
            ("ent_coef_message", self.ent_coef_message.to_string()),
            ("vf_coef", self.vf_coef.to_string()),
            ("max_grad_norm", self.max_grad_norm.to_string()),
        ]
    }
}

/// `lr₀ · (1 − step / total)`, clamped to `[0, lr₀]`.
pub fn lr_schedule(step: u64, total: u64, lr0: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let frac = 1.0 - (step as f64 / total as f64).min(1.0);
    lr0 * frac
}
