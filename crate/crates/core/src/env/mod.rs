//! The Foraging Games grid world.

mod config;
mod trace;
mod world;

pub use config::{EnvConfig, Game, ScoreSplit};
pub use trace::{read_trace, write_trace, TraceStep};
pub use world::{
    field_cells, new_episode, sample_score_pair, Action, Cell, Item, Observation, Outcome,
    StepInfo, StepResult, World, CODE_EMPTY, CODE_ITEM, CODE_PARTNER, CODE_WALL, FREEZE_STEPS,
    MAX_SCORE,
};
