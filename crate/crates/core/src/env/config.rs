use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{render_section, KvMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Game {
    /// Both agents must jointly pick up the higher-scoring item.
    ScoreG,
    /// Both agents must pick up the items in the order they spawned.
    TemporalG,
}

impl Game {
    pub fn default_t_max(self) -> usize {
        match self {
            Game::ScoreG => 10,
            Game::TemporalG => 20,
        }
    }

    /// Channels per receptive-field cell.
    pub fn channels(self) -> usize {
        match self {
            Game::ScoreG => 2,
            Game::TemporalG => 1,
        }
    }
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Game::ScoreG => "ScoreG",
            Game::TemporalG => "TemporalG",
        })
    }
}

impl FromStr for Game {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ScoreG" => Ok(Game::ScoreG),
            "TemporalG" => Ok(Game::TemporalG),
            other => Err(Error::Config(format!("unknown game `{other}`"))),
        }
    }
}

/// Which score pool ScoreG draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreSplit {
    /// Multiples of 5 in `[5, 250]`.
    Train,
    /// Even values in `[2, 248]` that are not multiples of 10.
    Test,
    /// Even values in `[160, 240]`; both items score high.
    High,
}

impl ScoreSplit {
    pub fn values(self) -> Vec<u32> {
        match self {
            ScoreSplit::Train => (1..=50).map(|k| 5 * k).collect(),
            ScoreSplit::Test => (2..=248).step_by(2).filter(|v| v % 10 != 0).collect(),
            ScoreSplit::High => (160..=240).step_by(2).collect(),
        }
    }
}

impl fmt::Display for ScoreSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreSplit::Train => "Train",
            ScoreSplit::Test => "Test",
            ScoreSplit::High => "High",
        })
    }
}

impl FromStr for ScoreSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Train" => Ok(ScoreSplit::Train),
            "Test" => Ok(ScoreSplit::Test),
            "High" => Ok(ScoreSplit::High),
            other => Err(Error::Config(format!("unknown score split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvConfig {
    pub game: Game,
    pub grid_h: usize,
    pub grid_w: usize,
    pub t_max: usize,
    pub vocab_size: usize,
    pub partner_visible: bool,
    pub communication_enabled: bool,
    pub n_obstacles: usize,
    pub score_split: ScoreSplit,
    /// When set, a pickup registered by only one agent ends the episode as a
    /// failure. Off by default: the lone pickup is then a no-op.
    pub lone_pickup_fails: bool,
}

impl EnvConfig {
    pub fn new(game: Game) -> Self {
        EnvConfig {
            game,
            grid_h: 5,
            grid_w: 5,
            t_max: game.default_t_max(),
            vocab_size: 4,
            partner_visible: false,
            communication_enabled: true,
            n_obstacles: 0,
            score_split: ScoreSplit::Train,
            lone_pickup_fails: false,
        }
    }

    pub fn score_g() -> Self {
        Self::new(Game::ScoreG)
    }

    pub fn temporal_g() -> Self {
        Self::new(Game::TemporalG)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_h < 3 || self.grid_w < 3 {
            return Err(Error::Config(format!(
                "grid must be at least 3x3, got {}x{}",
                self.grid_h, self.grid_w
            )));
        }
        if self.t_max < 1 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config(format!("vocab_size must be >= 2, got {}", self.vocab_size)));
        }
        if self.n_obstacles > 4 {
            return Err(Error::Config(format!(
                "n_obstacles must be in 0..=4, got {}",
                self.n_obstacles
            )));
        }
        if self.game == Game::TemporalG && self.t_max <= super::world::FREEZE_STEPS {
            return Err(Error::Config(format!(
                "TemporalG needs t_max > {} to leave time to move",
                super::world::FREEZE_STEPS
            )));
        }
        Ok(())
    }

    /// Grid input width for the agent's encoder (3×3×channels).
    pub fn grid_features(&self) -> usize {
        9 * self.game.channels()
    }

    pub fn read_kv(kv: &KvMap, prefix: &str) -> Result<Self> {
        Self::read_kv_or(kv, prefix, Game::ScoreG)
    }

    /// Like [`EnvConfig::read_kv`], with `game` as the default game.
    pub fn read_kv_or(kv: &KvMap, prefix: &str, game: Game) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let game: Game = kv.get(&key("game"))?.unwrap_or(game);
        let d = Self::new(game);
        let cfg = EnvConfig {
            game,
            grid_h: kv.get_or(&key("grid_h"), d.grid_h)?,
            grid_w: kv.get_or(&key("grid_w"), d.grid_w)?,
            t_max: kv.get_or(&key("t_max"), d.t_max)?,
            vocab_size: kv.get_or(&key("vocab_size"), d.vocab_size)?,
            partner_visible: kv.get_or(&key("partner_visible"), d.partner_visible)?,
            communication_enabled: kv.get_or(&key("communication_enabled"), d.communication_enabled)?,
            n_obstacles: kv.get_or(&key("n_obstacles"), d.n_obstacles)?,
            score_split: kv.get_or(&key("score_split"), d.score_split)?,
            lone_pickup_fails: kv.get_or(&key("lone_pickup_fails"), d.lone_pickup_fails)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("game", self.game.to_string()),
            ("grid_h", self.grid_h.to_string()),
            ("grid_w", self.grid_w.to_string()),
            ("t_max", self.t_max.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("partner_visible", self.partner_visible.to_string()),
            ("communication_enabled", self.communication_enabled.to_string()),
            ("n_obstacles", self.n_obstacles.to_string()),
            ("score_split", self.score_split.to_string()),
            ("lone_pickup_fails", self.lone_pickup_fails.to_string()),
        ]
    }

    /// Flat `key = value` rendering, parseable by [`EnvConfig::from_text`].
    pub fn to_text(&self) -> String {
        render_section(None, &self.to_pairs())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let cfg = Self::read_kv(&kv, "")?;
        kv.finish()?;
        Ok(cfg)
    }
}
