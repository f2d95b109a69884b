//! Population-level evaluation: SR and LS matrices, IC, topsim and
//! distance curves, aggregated over metric seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episodes::{episode_seeds, replay_batch, run_episodes, EpisodeRecord};
use super::measures::{interchangeability, mean_std, normalized_edit_distance, topsim};
use crate::agent::{AgentParams, SelectMode};
use crate::env::{EnvConfig, Game, Observation, MAX_SCORE};
use crate::error::{Error, Result};

/// `n × n` table with `None` for pairs that were not evaluated.
pub type Matrix = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairFilter {
    All,
    SelfOnly,
    CrossOnly,
}

impl PairFilter {
    pub fn admits(self, i: usize, j: usize) -> bool {
        match self {
            PairFilter::All => true,
            PairFilter::SelfOnly => i == j,
            PairFilter::CrossOnly => i != j,
        }
    }
}

impl std::str::FromStr for PairFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(PairFilter::All),
            "self" => Ok(PairFilter::SelfOnly),
            "cross" => Ok(PairFilter::CrossOnly),
            other => Err(Error::Config(format!("unknown pairing filter `{other}` (all|self|cross)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LsProtocol {
    /// Teacher-force the other agent through the reference agent's inputs.
    Replay,
    /// Compare the two bodies' chains within the same live episode.
    Live,
}

impl std::str::FromStr for LsProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replay" => Ok(LsProtocol::Replay),
            "live" => Ok(LsProtocol::Live),
            other => Err(Error::Config(format!("unknown LS protocol `{other}` (replay|live)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub episodes: usize,
    pub metric_seeds: Vec<u64>,
    pub pairing: PairFilter,
    /// Decoding for the success-rate pass.
    pub sr_mode: SelectMode,
    /// Decoding for the message pass behind LS and topsim.
    pub message_mode: SelectMode,
    pub ls_protocol: LsProtocol,
    pub topsim: bool,
    pub ls: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            episodes: 1000,
            metric_seeds: vec![0, 1, 2],
            pairing: PairFilter::All,
            sr_mode: SelectMode::Sample,
            message_mode: SelectMode::Greedy,
            ls_protocol: LsProtocol::Replay,
            topsim: true,
            ls: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        MeanStd { mean, std }
    }
}

/// Success rate and mean length of successful episodes for one pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub success_rate: f64,
    pub success_len: Option<f64>,
}

pub fn pair_stats(records: &[EpisodeRecord]) -> PairStats {
    let wins: Vec<f64> = records.iter().filter(|r| r.success).map(|r| r.len as f64).collect();
    PairStats {
        success_rate: wins.len() as f64 / records.len().max(1) as f64,
        success_len: (!wins.is_empty()).then(|| wins.iter().sum::<f64>() / wins.len() as f64),
    }
}

fn ordered_pairs(n: usize, filter: PairFilter) -> Vec<[usize; 2]> {
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [i, j]))
        .filter(|&[i, j]| filter.admits(i, j))
        .collect()
}

/// Plays every admitted ordered pair on the same seeds.
pub fn evaluate_pairs(
    cfg: &EnvConfig,
    agents: &[AgentParams<f32>],
    seeds: &[u64],
    filter: PairFilter,
    mode: SelectMode,
) -> Result<BTreeMap<[usize; 2], Vec<EpisodeRecord>>> {
    ordered_pairs(agents.len(), filter)
        .into_par_iter()
        .map(|pair| Ok((pair, run_episodes(cfg, agents, pair, seeds, mode)?)))
        .collect()
}

/// SR(i, j) where agent `i` drives body 0 and `j` body 1.
pub fn success_matrix(n: usize, runs: &BTreeMap<[usize; 2], Vec<EpisodeRecord>>) -> Matrix {
    let mut m = vec![vec![None; n]; n];
    for (&[i, j], recs) in runs {
        m[i][j] = Some(pair_stats(recs).success_rate);
    }
    m
}

fn dense(m: &Matrix) -> Option<Vec<Vec<f64>>> {
    m.iter().map(|row| row.iter().copied().collect::<Option<Vec<f64>>>()).collect()
}

/// Mean of the diagonal and of the off-diagonal entries that are present.
pub fn self_and_cross(m: &Matrix) -> (Option<f64>, Option<f64>) {
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let n = m.len();
    let diag = (0..n).filter_map(|i| m[i][i]).collect();
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .filter_map(|(i, j)| m[i][j])
        .collect();
    (mean(diag), mean(off))
}

/// Language similarity matrix. Under [`LsProtocol::Replay`], `LS(i, j)` uses
/// every greedy episode in which `i` took part as the reference: `j` is
/// teacher-forced through `i`'s inputs and the two greedy chains compared.
/// Under [`LsProtocol::Live`], `LS(i, j)` compares the bodies' chains in the
/// episodes of pair `(i, j)`.
pub fn language_similarity(
    agents: &[AgentParams<f32>],
    runs: &BTreeMap<[usize; 2], Vec<EpisodeRecord>>,
    protocol: LsProtocol,
    filter: PairFilter,
) -> Result<Matrix> {
    let n = agents.len();
    let mut m = vec![vec![None; n]; n];
    match protocol {
        LsProtocol::Live => {
            for (&[i, j], recs) in runs {
                if recs.is_empty() {
                    return Err(Error::Undefined(format!("no episodes for pair ({i}, {j})")));
                }
                let sims: Vec<f64> =
                    recs.iter().map(|r| 1.0 - normalized_edit_distance(r.chain(0), r.chain(1))).collect();
                m[i][j] = Some(sims.iter().sum::<f64>() / sims.len() as f64);
            }
        }
        LsProtocol::Replay => {
            let cells: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| filter.admits(i, j))
                .collect();
            let values: Vec<((usize, usize), f64)> = cells
                .into_par_iter()
                .map(|(i, j)| Ok(((i, j), replay_ls(agents, runs, i, j)?)))
                .collect::<Result<_>>()?;
            for ((i, j), v) in values {
                m[i][j] = Some(v);
            }
        }
    }
    Ok(m)
}

fn reference_views(runs: &BTreeMap<[usize; 2], Vec<EpisodeRecord>>, i: usize) -> Vec<(&EpisodeRecord, usize)> {
    runs.values()
        .flatten()
        .filter_map(|r| r.body_of(i).map(|b| (r, b)))
        .collect()
}

fn replay_ls(
    agents: &[AgentParams<f32>],
    runs: &BTreeMap<[usize; 2], Vec<EpisodeRecord>>,
    i: usize,
    j: usize,
) -> Result<f64> {
    let refs = reference_views(runs, i);
    if refs.is_empty() {
        return Err(Error::Undefined(format!("no reference episodes for agent {i}")));
    }
    if i == j {
        return Ok(1.0);
    }
    let streams: Vec<&[Observation]> = refs.iter().map(|(r, b)| r.inputs[*b].as_slice()).collect();
    let replayed = replay_batch(&agents[j], &streams)?;
    let total: f64 = refs
        .iter()
        .zip(&replayed)
        .map(|((r, b), toks)| {
            let theirs = super::episodes::chain_slice(r.game, r.first_adjacency, toks);
            1.0 - normalized_edit_distance(r.chain(*b), theirs)
        })
        .sum();
    Ok(total / refs.len() as f64)
}

/// Mean over ordered pairs `i ≠ j` that are present.
pub fn population_ls(m: &Matrix) -> Option<f64> {
    self_and_cross(m).1
}

/// Discretized attribute vector of an episode, used as topsim meaning.
/// ScoreG: per item (score bin of 10, column). TemporalG: per item
/// (spawn time, row, column).
pub fn meaning(r: &EpisodeRecord) -> Vec<usize> {
    match r.game {
        Game::ScoreG => r.items.iter().flat_map(|it| [score_bin(it.score), it.pos.col]).collect(),
        Game::TemporalG => r.items.iter().flat_map(|it| [it.spawn_time, it.pos.row, it.pos.col]).collect(),
    }
}

/// Ten equal-width bins over `[0, 250]`.
pub fn score_bin(score: u32) -> usize {
    ((score as f64 / MAX_SCORE as f64 * 10.0).floor() as usize).min(9)
}

/// Topsim of `agent`'s chains over up to `limit` of the episodes it played.
pub fn agent_topsim(
    runs: &BTreeMap<[usize; 2], Vec<EpisodeRecord>>,
    agent: usize,
    limit: usize,
) -> Result<f64> {
    let views: Vec<_> = reference_views(runs, agent).into_iter().take(limit).collect();
    let messages: Vec<Vec<usize>> = views.iter().map(|(r, b)| r.chain(*b).to_vec()).collect();
    let meanings: Vec<Vec<usize>> = views.iter().map(|(r, _)| meaning(r)).collect();
    topsim(&messages, &meanings)
}

pub fn circular_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// One bucket of a distance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub distance: usize,
    pub pairs: usize,
    pub mean: f64,
    pub std: f64,
}

/// Aggregates a matrix by circular distance `min(|i−j|, n−|i−j|)`, for
/// distances `1..=n/2`. Each unordered pair contributes the mean of its two
/// ordered entries.
pub fn ring_curve(m: &Matrix) -> Vec<CurvePoint> {
    let n = m.len();
    (1..=n / 2)
        .map(|d| {
            let vals: Vec<f64> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| circular_distance(i, j, n) == d)
                .filter_map(|(i, j)| {
                    let both: Vec<f64> = [m[i][j], m[j][i]].into_iter().flatten().collect();
                    (!both.is_empty()).then(|| both.iter().sum::<f64>() / both.len() as f64)
                })
                .collect();
            let (mean, std) = mean_std(&vals);
            CurvePoint {
                distance: d,
                pairs: vals.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Metrics under one metric seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub sr: Matrix,
    pub success_len: Matrix,
    pub ls: Option<Matrix>,
    pub topsim: Option<Vec<Option<f64>>>,
    pub self_sr: Option<f64>,
    pub cross_sr: Option<f64>,
    pub ic: Option<f64>,
    pub mean_ls: Option<f64>,
    pub mean_topsim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub self_sr: Option<MeanStd>,
    pub cross_sr: Option<MeanStd>,
    pub ic: Option<MeanStd>,
    pub ls: Option<MeanStd>,
    pub topsim: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub n_pop: usize,
    pub options: EvalOptions,
    pub seeds: Vec<SeedMetrics>,
    pub summary: Summary,
    pub sr_curve: Option<Vec<CurvePoint>>,
    pub ls_curve: Option<Vec<CurvePoint>>,
}

fn summarize(xs: impl Iterator<Item = Option<f64>>) -> Option<MeanStd> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| MeanStd::of(&v))
}

fn mean_matrix(ms: &[&Matrix]) -> Matrix {
    let n = ms.first().map_or(0, |m| m.len());
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v: Vec<f64> = ms.iter().filter_map(|m| m[i][j]).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect()
        })
        .collect()
}

/// Full evaluation of a population. `ring` enables distance curves.
pub fn evaluate_population(
    experiment: &str,
    cfg: &EnvConfig,
    agents: &[AgentParams<f32>],
    opts: &EvalOptions,
    ring: bool,
) -> Result<MetricsReport> {
    if opts.episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let n = agents.len();
    let mut per_seed = Vec::with_capacity(opts.metric_seeds.len());
    for &seed in &opts.metric_seeds {
        let seeds = episode_seeds(seed, opts.episodes);
        let sr_runs = evaluate_pairs(cfg, agents, &seeds, opts.pairing, opts.sr_mode)?;
        let sr = success_matrix(n, &sr_runs);
        let mut success_len = vec![vec![None; n]; n];
        for (&[i, j], recs) in &sr_runs {
            success_len[i][j] = pair_stats(recs).success_len;
        }
        let msg_runs = if (opts.ls || opts.topsim) && opts.message_mode != opts.sr_mode {
            Some(evaluate_pairs(cfg, agents, &seeds, opts.pairing, opts.message_mode)?)
        } else {
            None
        };
        let msg = msg_runs.as_ref().unwrap_or(&sr_runs);
        let ls = opts
            .ls
            .then(|| language_similarity(agents, msg, opts.ls_protocol, opts.pairing))
            .transpose()?;
        let topsim = opts.topsim.then(|| {
            (0..n)
                .map(|k| agent_topsim(msg, k, opts.episodes).ok())
                .collect::<Vec<_>>()
        });
        let (self_sr, cross_sr) = self_and_cross(&sr);
        let ic = dense(&sr).and_then(|d| interchangeability(&d).ok());
        let mean_ls = ls.as_ref().and_then(population_ls);
        let mean_topsim = topsim.as_ref().and_then(|v| {
            let xs: Vec<f64> = v.iter().flatten().copied().collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        });
        per_seed.push(SeedMetrics {
            seed,
            sr,
            success_len,
            ls,
            topsim,
            self_sr,
            cross_sr,
            ic,
            mean_ls,
            mean_topsim,
        });
    }
    let summary = Summary {
        self_sr: summarize(per_seed.iter().map(|s| s.self_sr)),
        cross_sr: summarize(per_seed.iter().map(|s| s.cross_sr)),
        ic: summarize(per_seed.iter().map(|s| s.ic)),
        ls: summarize(per_seed.iter().map(|s| s.mean_ls)),
        topsim: summarize(per_seed.iter().map(|s| s.mean_topsim)),
    };
    let (sr_curve, ls_curve) = if ring {
        let srs: Vec<&Matrix> = per_seed.iter().map(|s| &s.sr).collect();
        let lss: Vec<&Matrix> = per_seed.iter().filter_map(|s| s.ls.as_ref()).collect();
        (
            Some(ring_curve(&mean_matrix(&srs))),
            (!lss.is_empty()).then(|| ring_curve(&mean_matrix(&lss))),
        )
    } else {
        (None, None)
    };
    Ok(MetricsReport {
        experiment: experiment.to_string(),
        n_pop: n,
        options: opts.clone(),
        seeds: per_seed,
        summary,
        sr_curve,
        ls_curve,
    })
}

impl MetricsReport {
    /// Long-format CSV: `kind,seed,i,j,value`. Scalars leave `i`/`j` empty;
    /// curve rows put the distance in `i`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,seed,i,j,value\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for s in &self.seeds {
            let mut mat = |kind: &str, m: &Matrix| {
                for (i, row) in m.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        if v.is_some() {
                            let _ = writeln!(out, "{kind},{},{i},{j},{}", s.seed, cell(*v));
                        }
                    }
                }
            };
            mat("sr", &s.sr);
            mat("success_len", &s.success_len);
            if let Some(ls) = &s.ls {
                mat("ls", ls);
            }
            if let Some(ts) = &s.topsim {
                for (k, v) in ts.iter().enumerate() {
                    let _ = writeln!(out, "topsim,{},{k},,{}", s.seed, cell(*v));
                }
            }
            for (kind, v) in [
                ("self_sr", s.self_sr),
                ("cross_sr", s.cross_sr),
                ("ic", s.ic),
                ("mean_ls", s.mean_ls),
                ("mean_topsim", s.mean_topsim),
            ] {
                let _ = writeln!(out, "{kind},{},,,{}", s.seed, cell(v));
            }
        }
        for (kind, curve) in [("sr_curve", &self.sr_curve), ("ls_curve", &self.ls_curve)] {
            for p in curve.iter().flatten() {
                let _ = writeln!(out, "{kind}_mean,,{},,{}", p.distance, p.mean);
                let _ = writeln!(out, "{kind}_std,,{},,{}", p.distance, p.std);
            }
        }
        out
    }
}
