use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy_summary, build_dataset, cross_validate, CvConfig, FeatureMode, FoldResult, Target};
use crate::agent::{AgentParams, SelectMode};
use crate::env::{EnvConfig, Game};
use crate::error::{Error, Result};
use crate::metrics::{episode_seeds, run_episodes, EpisodeRecord, MeanStd};

/// `n` episodes featuring `agent`, spread over every partner (itself when
/// alone) and both bodies.
pub fn agent_records(
    cfg: &EnvConfig,
    agents: &[AgentParams<f32>],
    agent: usize,
    n: usize,
    seed: u64,
    mode: SelectMode,
) -> Result<Vec<EpisodeRecord>> {
    let partners: Vec<usize> = if agents.len() == 1 {
        vec![agent]
    } else {
        (0..agents.len()).filter(|&j| j != agent).collect()
    };
    let seeds = episode_seeds(seed ^ (agent as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), n);
    let mut groups: BTreeMap<[usize; 2], Vec<(usize, u64)>> = BTreeMap::new();
    for (idx, &s) in seeds.iter().enumerate() {
        let j = partners[idx % partners.len()];
        let pair = if (idx / partners.len()).is_multiple_of(2) { [agent, j] } else { [j, agent] };
        groups.entry(pair).or_default().push((idx, s));
    }
    let mut out: Vec<Option<EpisodeRecord>> = vec![None; n];
    for (pair, items) in groups {
        let s: Vec<u64> = items.iter().map(|&(_, s)| s).collect();
        for ((idx, _), rec) in items.iter().zip(run_episodes(cfg, agents, pair, &s, mode)?) {
            out[*idx] = Some(rec);
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every index assigned")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub agent: usize,
    pub target: Target,
    pub mode: FeatureMode,
    pub result: FoldResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummaryEntry {
    pub target: Target,
    pub mode: FeatureMode,
    pub classes: usize,
    pub chance: f64,
    pub feature_width: usize,
    /// Mean ± std over agents of each agent's mean fold accuracy.
    pub accuracy: MeanStd,
    pub per_agent: Vec<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub game: Game,
    pub experiment: String,
    pub samples_per_agent: usize,
    pub rows: Vec<ProbeRow>,
    pub summary: Vec<ProbeSummaryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub targets: Vec<Target>,
    pub modes: Vec<FeatureMode>,
    pub samples: usize,
    pub seed: u64,
    pub message_mode: SelectMode,
    pub cv: CvConfig,
}

impl ProbeOptions {
    pub fn for_game(game: Game) -> Self {
        ProbeOptions {
            targets: Target::for_game(game).to_vec(),
            modes: vec![FeatureMode::IntegerMsg, FeatureMode::MsgEmbedding],
            samples: 5000,
            seed: 0,
            message_mode: SelectMode::Greedy,
            cv: CvConfig::default(),
        }
    }
}

pub fn probe_population(
    experiment: &str,
    cfg: &EnvConfig,
    agents: &[AgentParams<f32>],
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    for t in &opts.targets {
        t.classes(cfg.game, cfg.grid_h, cfg.grid_w)?;
    }
    let cv = if opts.samples < opts.cv.train_size + opts.cv.test_size {
        CvConfig {
            lr: opts.cv.lr,
            ..CvConfig::scaled_to(opts.samples)
        }
    } else {
        opts.cv
    };
    let records: Vec<Vec<EpisodeRecord>> = (0..agents.len())
        .into_par_iter()
        .map(|k| agent_records(cfg, agents, k, opts.samples, opts.seed, opts.message_mode))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Target, FeatureMode)> = (0..agents.len())
        .flat_map(|k| opts.targets.iter().flat_map(move |&t| opts.modes.iter().map(move |&m| (k, t, m))))
        .collect();
    let results: Vec<(usize, Target, FeatureMode, Vec<FoldResult>)> = jobs
        .into_par_iter()
        .map(|(k, t, m)| {
            let ds = build_dataset(&records[k], k, &agents[k], t, m, cfg.grid_h, cfg.grid_w, cfg.t_max, opts.samples)?;
            Ok((k, t, m, cross_validate(&ds, &cv)?))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &t in &opts.targets {
        for &m in &opts.modes {
            let per_agent: Vec<MeanStd> = results
                .iter()
                .filter(|r| r.1 == t && r.2 == m)
                .map(|r| accuracy_summary(&r.3))
                .collect();
            let means: Vec<f64> = per_agent.iter().map(|a| a.mean).collect();
            let spec = agents[0].spec();
            summary.push(ProbeSummaryEntry {
                target: t,
                mode: m,
                classes: t.classes(cfg.game, cfg.grid_h, cfg.grid_w)?,
                chance: t.chance(cfg.game, cfg.grid_h, cfg.grid_w)?,
                feature_width: m.width(spec.vocab, spec.embed_dim, cfg.t_max),
                accuracy: MeanStd::of(&means),
                per_agent,
            });
        }
    }
    for (k, t, m, folds) in results {
        rows.extend(folds.into_iter().map(|result| ProbeRow {
            agent: k,
            target: t,
            mode: m,
            result,
        }));
    }
    if rows.is_empty() {
        return Err(Error::Usage("probe run produced no rows".into()));
    }
    Ok(ProbeReport {
        game: cfg.game,
        experiment: experiment.to_string(),
        samples_per_agent: opts.samples,
        rows,
        summary,
    })
}

impl ProbeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("game,agent,target,feature_mode,fold,seed,accuracy,chance\n");
        for r in &self.rows {
            let chance = self
                .summary
                .iter()
                .find(|s| s.target == r.target && s.mode == r.mode)
                .map_or(f64::NAN, |s| s.chance);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.game, r.agent, r.target, r.mode, r.result.fold, r.result.seed, r.result.accuracy, chance
            );
        }
        out
    }
}
