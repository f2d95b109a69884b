use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use clap::{Args as ClapArgs, ValueEnum};
use serde::Serialize;

use crate::cmd::train::apply_overrides;
use crate::exit::{Tag, CONFIG};
use crate::run::{self, parse_list, parse_steps, RunManifest};
use foraging::env::{EnvConfig, Game, ScoreSplit};
use foraging::metrics::{evaluate_population, EvalOptions, MeanStd, MetricsReport, PairFilter};
use foraging::population::{train, ExperimentConfig};

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Vocab,
    Gridsize,
    Obstacles,
    Implicit,
}

#[derive(ClapArgs)]
pub struct Args {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Checkpoints to evaluate (repeatable).
    #[arg(long)]
    pub ckpt: Vec<PathBuf>,
    /// Train the variants from this base config first (vocab, implicit).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_parser = parse_steps)]
    pub steps_override: Option<u64>,
    /// Ablation values (vocab sizes, grid sizes or obstacle counts).
    #[arg(long, value_parser = parse_list::<usize>)]
    pub values: Option<std::vec::Vec<usize>>,
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    #[arg(long, default_value = "0,1,2", value_parser = parse_list::<u64>)]
    pub seeds: std::vec::Vec<u64>,
    #[arg(long, default_value = "ablation")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub kind: Kind,
    pub checkpoint: String,
    pub variant: String,
    pub value: Option<usize>,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

const VOCABS: [usize; 4] = [4, 8, 16, 32];

fn studied_range(kind: Kind, game: Game) -> Vec<usize> {
    match (kind, game) {
        (Kind::Vocab, _) => VOCABS.to_vec(),
        (Kind::Gridsize, Game::ScoreG) => (5..=9).collect(),
        (Kind::Gridsize, Game::TemporalG) => (5..=7).collect(),
        (Kind::Obstacles, Game::ScoreG) => (0..=4).collect(),
        (Kind::Obstacles, Game::TemporalG) => (0..=2).collect(),
        (Kind::Implicit, _) => Vec::new(),
    }
}

/// Checks `values` against the studied range for `kind`.
pub fn validate_values(kind: Kind, game: Game, values: &[usize]) -> Result<()> {
    let allowed = studied_range(kind, game);
    if let Some(v) = values.iter().find(|v| !allowed.contains(v)) {
        return Err(anyhow!(
            "{kind:?} value {v} is outside the studied range {allowed:?} for {game}"
        ))
        .tag(CONFIG);
    }
    Ok(())
}

/// Name of the channel variant a config trains.
pub fn implicit_variant(env: &EnvConfig) -> &'static str {
    match (env.partner_visible, env.communication_enabled) {
        (false, true) => "Inv-Com",
        (false, false) => "Inv-NoCom",
        (true, false) => "Vis-NoCom",
        (true, true) => "Vis-Com",
    }
}

fn implicit_configs(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    [(false, true), (false, false), (true, false)]
        .into_iter()
        .map(|(vis, com)| {
            let mut c = base.clone();
            c.env.partner_visible = vis;
            c.env.communication_enabled = com;
            (implicit_variant(&c.env).to_string(), c)
        })
        .collect()
}

fn summarize_len(r: &MetricsReport) -> Option<MeanStd> {
    let per_seed: Vec<f64> = r
        .seeds
        .iter()
        .filter_map(|s| {
            let xs: Vec<f64> = s.success_len.iter().flatten().flatten().copied().collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        })
        .collect();
    (!per_seed.is_empty()).then(|| MeanStd::of(&per_seed))
}

fn overall_sr(r: &MetricsReport) -> MeanStd {
    let per_seed: Vec<f64> = r
        .seeds
        .iter()
        .map(|s| {
            let xs: Vec<f64> = s.sr.iter().flatten().flatten().copied().collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        })
        .collect();
    MeanStd::of(&per_seed)
}

fn push(rows: &mut Vec<Row>, base: &Row, metric: &str, v: Option<MeanStd>) {
    if let Some(m) = v {
        rows.push(Row {
            metric: metric.to_string(),
            mean: m.mean,
            std: m.std,
            ..base.clone()
        });
    }
}

fn train_variants(a: &Args, base_path: &Path) -> Result<Vec<PathBuf>> {
    let base = apply_overrides(run::read_config(base_path)?, None, a.steps_override)?;
    let variants: Vec<(String, ExperimentConfig)> = match a.kind {
        Kind::Vocab => {
            let values = a.values.clone().unwrap_or_else(|| VOCABS.to_vec());
            validate_values(Kind::Vocab, base.env.game, &values)?;
            values
                .into_iter()
                .map(|v| {
                    let mut c = base.clone();
                    c.env.vocab_size = v;
                    (format!("vocab-{v}"), c)
                })
                .collect()
        }
        Kind::Implicit => implicit_configs(&base),
        other => return Err(anyhow!("--train applies to vocab and implicit, not {other:?}")).tag(CONFIG),
    };
    let mut dirs = Vec::new();
    for (name, cfg) in variants {
        cfg.validate().tag(CONFIG)?;
        let dir = a.out.join(name);
        eprintln!("training {} into {}", cfg.name, dir.display());
        train(&cfg, &dir, true, |_, _| {})?;
        dirs.push(dir);
    }
    Ok(dirs)
}

pub fn run(a: Args) -> Result<()> {
    run::ensure_dir(&a.out)?;
    let mut ckpts = a.ckpt.clone();
    if let Some(base) = &a.train {
        ckpts.extend(train_variants(&a, base)?);
    }
    if ckpts.is_empty() {
        return Err(anyhow!("nothing to evaluate: pass --ckpt or --train")).tag(CONFIG);
    }
    let mut rows = Vec::new();
    let mut seeds_used = a.seeds.clone();
    seeds_used.sort_unstable();
    let mut first_cfg = None;
    for dir in &ckpts {
        let (pop, cfg) = run::load_checkpoint(dir)?;
        let game = cfg.env.game;
        let label = dir.display().to_string();
        let mut opts = EvalOptions {
            episodes: a.episodes,
            metric_seeds: a.seeds.clone(),
            pairing: PairFilter::All,
            topsim: false,
            ls: false,
            ..EvalOptions::default()
        };
        let envs: Vec<(Option<usize>, String, EnvConfig)> = match a.kind {
            Kind::Vocab => {
                validate_values(Kind::Vocab, game, &[cfg.env.vocab_size])?;
                opts.topsim = true;
                opts.ls = true;
                vec![(Some(cfg.env.vocab_size), format!("vocab-{}", cfg.env.vocab_size), cfg.env.clone())]
            }
            Kind::Gridsize | Kind::Obstacles => {
                let values = a.values.clone().unwrap_or_else(|| studied_range(a.kind, game));
                validate_values(a.kind, game, &values)?;
                values
                    .into_iter()
                    .map(|v| {
                        let mut env = cfg.env.clone();
                        if a.kind == Kind::Gridsize {
                            env.grid_h = v;
                            env.grid_w = v;
                        } else {
                            env.n_obstacles = v;
                        }
                        env.validate().tag(CONFIG)?;
                        Ok((Some(v), cfg.name.to_string(), env))
                    })
                    .collect::<Result<_>>()?
            }
            Kind::Implicit => {
                let mut env = cfg.env.clone();
                if game == Game::ScoreG {
                    env.score_split = ScoreSplit::High;
                }
                vec![(None, implicit_variant(&cfg.env).to_string(), env)]
            }
        };
        for (value, variant, env) in envs {
            let report = evaluate_population(&cfg.name.to_string(), &env, &pop.agents, &opts, false)?;
            let base = Row {
                kind: a.kind,
                checkpoint: label.clone(),
                variant,
                value,
                metric: String::new(),
                mean: 0.0,
                std: 0.0,
            };
            push(&mut rows, &base, "sr", Some(overall_sr(&report)));
            push(&mut rows, &base, "self_sr", report.summary.self_sr);
            push(&mut rows, &base, "cross_sr", report.summary.cross_sr);
            push(&mut rows, &base, "success_len", summarize_len(&report));
            push(&mut rows, &base, "topsim", report.summary.topsim);
            push(&mut rows, &base, "ls", report.summary.ls);
        }
        first_cfg.get_or_insert(cfg);
    }
    let cfg = first_cfg.expect("at least one checkpoint");
    let manifest = RunManifest::new("ablate", &cfg, seeds_used);
    let mut csv = String::from("kind,checkpoint,variant,value,metric,mean,std\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.kind.to_possible_value().map_or(String::new(), |v| v.get_name().to_string()),
            r.checkpoint,
            r.variant,
            r.value.map_or(String::new(), |v| v.to_string()),
            r.metric,
            r.mean,
            r.std
        );
    }
    let (csv_path, json_path) = (a.out.join("ablation.csv"), a.out.join("ablation.json"));
    run::write_text(&csv_path, &csv)?;
    run::write_json(&json_path, &rows)?;
    manifest.finish(&a.out, vec![csv_path, json_path])?;
    for r in &rows {
        println!(
            "{:<10} {:<24} {:>4} {:<12} {:.3} ± {:.3}",
            r.variant,
            Path::new(&r.checkpoint).file_name().map_or(r.checkpoint.clone(), |f| f.to_string_lossy().into_owned()),
            r.value.map_or("-".into(), |v| v.to_string()),
            r.metric,
            r.mean,
            r.std
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacle_range_is_enforced() {
        assert!(validate_values(Kind::Obstacles, Game::ScoreG, &[0, 4]).is_ok());
        let e = validate_values(Kind::Obstacles, Game::ScoreG, &[5]).unwrap_err();
        assert_eq!(crate::exit::code_for(&e), CONFIG);
        assert!(validate_values(Kind::Obstacles, Game::TemporalG, &[3]).is_err());
        assert!(validate_values(Kind::Gridsize, Game::TemporalG, &[8]).is_err());
        assert!(validate_values(Kind::Vocab, Game::ScoreG, &[12]).is_err());
    }

    #[test]
    fn implicit_variants_cover_three_channels() {
        let base = ExperimentConfig::new("ScoreG-P2-FC-XP".parse().unwrap());
        let names: Vec<String> = implicit_configs(&base).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["Inv-Com", "Inv-NoCom", "Vis-NoCom"]);
    }
}
