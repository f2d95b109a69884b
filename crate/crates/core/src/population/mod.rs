//! Populations of independently trained agents and who trains with whom.

mod checkpoint;
mod config;
mod pairing;
mod trainer;

pub use checkpoint::{
    agent_file, agent_seed, load_population, read_manifest, save_population, AgentEntry, Manifest, Population,
    MANIFEST, TRAINING_LOG,
};
pub use config::ExperimentConfig;
pub use pairing::{allowed_pairs, sample_pairing, ExperimentName, Regime, Topology, TopologyKind};
pub use trainer::{read_training_log, train, IterationReport, LogRow, Trainer, TRAINER_STATE};
