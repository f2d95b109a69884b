//! Decentralized recurrent PPO: every agent learns only from the bodies it
//! occupied, with its own optimiser state.

mod config;
mod gae;
mod rollout;
mod update;

pub use config::{lr_schedule, PpoConfig};
pub use gae::{compute_gae, normalize};
pub use rollout::{EnvSlot, EpisodeSummary, RolloutBuffer, Sequence, Transition, VecEnv};
pub use update::{ppo_loss, ppo_update, LossReport, MiniBatch, TrainStats};
