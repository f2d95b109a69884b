//! Linear decoding of item attributes from message chains.

mod logreg;
mod report;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentParams;
use crate::env::Game;
use crate::error::{Error, Result};
use crate::metrics::{mean_std, score_bin, EpisodeRecord, MeanStd};

pub use logreg::{fit_ovr_logreg, LogRegConfig, LrModel};
pub use report::{agent_records, probe_population, ProbeOptions, ProbeReport, ProbeRow, ProbeSummaryEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Score10,
    VPos,
    HPos,
    SpawnTime,
}

impl Target {
    pub fn for_game(game: Game) -> [Target; 3] {
        match game {
            Game::ScoreG => [Target::Score10, Target::VPos, Target::HPos],
            Game::TemporalG => [Target::SpawnTime, Target::VPos, Target::HPos],
        }
    }

    pub fn classes(self, game: Game, grid_h: usize, grid_w: usize) -> Result<usize> {
        match (self, game) {
            (Target::Score10, Game::ScoreG) => Ok(10),
            (Target::SpawnTime, Game::TemporalG) => Ok(crate::env::FREEZE_STEPS),
            (Target::VPos, Game::ScoreG) => Ok(2),
            (Target::VPos, Game::TemporalG) => Ok(grid_h - 1),
            (Target::HPos, _) => Ok(grid_w),
            (t, g) => Err(Error::Config(format!("target {t} does not apply to {g}"))),
        }
    }

    pub fn chance(self, game: Game, grid_h: usize, grid_w: usize) -> Result<f64> {
        Ok(1.0 / self.classes(game, grid_h, grid_w)? as f64)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Score10 => "score",
            Target::VPos => "vpos",
            Target::HPos => "hpos",
            Target::SpawnTime => "time",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(Target::Score10),
            "vpos" => Ok(Target::VPos),
            "hpos" => Ok(Target::HPos),
            "time" => Ok(Target::SpawnTime),
            other => Err(Error::Config(format!("unknown probe target `{other}` (score|vpos|hpos|time)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    IntegerMsg,
    MsgEmbedding,
}

impl FeatureMode {
    pub fn width(self, vocab: usize, embed_dim: usize, t_max: usize) -> usize {
        match self {
            FeatureMode::IntegerMsg => vocab * t_max,
            FeatureMode::MsgEmbedding => embed_dim * t_max,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::IntegerMsg => "integer",
            FeatureMode::MsgEmbedding => "embedding",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" => Ok(FeatureMode::IntegerMsg),
            "embedding" => Ok(FeatureMode::MsgEmbedding),
            other => Err(Error::Config(format!("unknown feature mode `{other}` (integer|embedding)"))),
        }
    }
}

/// Fixed-width feature vector for one chain. Positions past the chain's end
/// stay zero.
pub fn featurize(
    chain: &[usize],
    mode: FeatureMode,
    vocab: usize,
    t_max: usize,
    table: Option<&AgentParams<f32>>,
) -> Result<Vec<f64>> {
    if chain.len() > t_max {
        return Err(Error::Usage(format!("chain of length {} exceeds t_max {t_max}", chain.len())));
    }
    if let Some(&bad) = chain.iter().find(|&&t| t >= vocab) {
        return Err(Error::TokenRange { token: bad, vocab });
    }
    match mode {
        FeatureMode::IntegerMsg => {
            let mut v = vec![0.0; vocab * t_max];
            for (p, &tok) in chain.iter().enumerate() {
                v[p * vocab + tok] = 1.0;
            }
            Ok(v)
        }
        FeatureMode::MsgEmbedding => {
            let params = table.ok_or_else(|| Error::Usage("embedding features need the sender's table".into()))?;
            let t = params.msg_table();
            let (rows, d) = t.matrix_dims();
            if rows != vocab {
                return Err(Error::shape("featurize", &[vocab, d], &[rows, d]));
            }
            let mut v = vec![0.0; d * t_max];
            for (p, &tok) in chain.iter().enumerate() {
                for (dst, &x) in v[p * d..(p + 1) * d].iter_mut().zip(t.row(tok)) {
                    *dst = x as f64;
                }
            }
            Ok(v)
        }
    }
}

/// Class of `target` for the item `body` observes.
pub fn label(r: &EpisodeRecord, body: usize, target: Target, grid_h: usize) -> Result<usize> {
    let it = &r.items[r.assigned[body]];
    match (target, r.game) {
        (Target::Score10, Game::ScoreG) => Ok(score_bin(it.score)),
        (Target::SpawnTime, Game::TemporalG) => Ok(it.spawn_time - 1),
        (Target::VPos, Game::ScoreG) => Ok(usize::from(it.pos.row == grid_h - 1)),
        (Target::VPos, Game::TemporalG) => {
            (0..grid_h)
                .filter(|&row| row != grid_h / 2)
                .position(|row| row == it.pos.row)
                .ok_or_else(|| Error::Usage(format!("item row {} is not a probe class", it.pos.row)))
        }
        (Target::HPos, _) => Ok(it.pos.col),
        (t, g) => Err(Error::Config(format!("target {t} does not apply to {g}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub target: Target,
    pub mode: FeatureMode,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Same features with labels permuted by `seed`.
    pub fn shuffled_labels(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        out
    }
}

/// Dataset of `agent`'s chains (in whichever body it played) labelled with
/// the attribute of the item that body observed.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    records: &[EpisodeRecord],
    agent: usize,
    params: &AgentParams<f32>,
    target: Target,
    mode: FeatureMode,
    grid_h: usize,
    grid_w: usize,
    t_max: usize,
    limit: usize,
) -> Result<ProbeDataset> {
    let game = records
        .first()
        .map(|r| r.game)
        .ok_or_else(|| Error::Undefined("probe dataset from zero episodes".into()))?;
    let classes = target.classes(game, grid_h, grid_w)?;
    let vocab = params.spec().vocab;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        let Some(body) = r.body_of(agent) else { continue };
        if features.len() == limit {
            break;
        }
        features.push(featurize(r.chain(body), mode, vocab, t_max, Some(params))?);
        labels.push(label(r, body, target, grid_h)?);
    }
    Ok(ProbeDataset {
        features,
        labels,
        classes,
        target,
        mode,
    })
}

/// One fitted fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub accuracy: f64,
}

/// Splits a shuffled index set into `folds` disjoint test blocks of
/// `test_size`, training on `train_size` of the remainder.
pub fn fold_indices(
    n: usize,
    folds: usize,
    train_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds * test_size > n || train_size + test_size > n {
        return Err(Error::Undefined(format!(
            "{n} samples cannot hold {folds} disjoint test folds of {test_size} plus {train_size} training rows"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..folds)
        .map(|f| {
            let test: Vec<usize> = idx[f * test_size..(f + 1) * test_size].to_vec();
            let train: Vec<usize> = idx[..f * test_size]
                .iter()
                .chain(&idx[(f + 1) * test_size..])
                .copied()
                .take(train_size)
                .collect();
            (train, test)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seeds: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub lr: LogRegConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 3,
            seeds: 3,
            train_size: 3500,
            test_size: 1500,
            lr: LogRegConfig::default(),
        }
    }
}

impl CvConfig {
    /// Sizes scaled down for `n` samples, keeping the 3500:1500 ratio.
    pub fn scaled_to(n: usize) -> Self {
        let d = Self::default();
        if n >= d.train_size + d.test_size {
            return d;
        }
        let test = (n * 3 / 10).min(n / d.folds);
        CvConfig {
            train_size: n - test,
            test_size: test,
            ..d
        }
    }
}

pub fn cross_validate(ds: &ProbeDataset, cfg: &CvConfig) -> Result<Vec<FoldResult>> {
    let mut out = Vec::with_capacity(cfg.folds * cfg.seeds);
    for seed in 0..cfg.seeds as u64 {
        for (fold, (train, test)) in fold_indices(ds.len(), cfg.folds, cfg.train_size, cfg.test_size, seed)?
            .into_iter()
            .enumerate()
        {
            let x: Vec<&[f64]> = train.iter().map(|&i| ds.features[i].as_slice()).collect();
            let y: Vec<usize> = train.iter().map(|&i| ds.labels[i]).collect();
            let model = fit_ovr_logreg(&x, &y, ds.classes, &cfg.lr)?;
            let hits = test
                .iter()
                .filter(|&&i| model.predict(&ds.features[i]) == ds.labels[i])
                .count();
            out.push(FoldResult {
                seed,
                fold,
                accuracy: hits as f64 / test.len() as f64,
            });
        }
    }
    Ok(out)
}

pub fn accuracy_summary(results: &[FoldResult]) -> MeanStd {
    let xs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&xs);
    MeanStd { mean, std }
}
