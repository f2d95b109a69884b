use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args as ClapArgs;

use crate::exit::{Tag, CONFIG};
use crate::run::{self, parse_list, RunManifest};
use foraging::agent::SelectMode;
use foraging::env::ScoreSplit;
use foraging::env::write_trace;
use foraging::metrics::{episode_seeds, evaluate_population, trace_episode, EvalOptions, LsProtocol, MeanStd, MetricsReport, PairFilter};
use foraging::population::TopologyKind;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Metric {
    Sr,
    Ls,
    Ic,
    Topsim,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sr" => Ok(Metric::Sr),
            "ls" => Ok(Metric::Ls),
            "ic" => Ok(Metric::Ic),
            "topsim" => Ok(Metric::Topsim),
            other => Err(format!("unknown metric `{other}` (sr,ls,ic,topsim)")),
        }
    }
}

pub fn parse_mode(s: &str) -> Result<SelectMode, String> {
    match s {
        "sample" => Ok(SelectMode::Sample),
        "greedy" => Ok(SelectMode::Greedy),
        other => Err(format!("unknown decoding `{other}` (sample|greedy)")),
    }
}

#[derive(ClapArgs)]
pub struct Args {
    /// Checkpoint directory written by `forage train`.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Episodes per ordered pair and metric seed.
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    #[arg(long, default_value = "sr,ls,ic,topsim", value_parser = parse_list::<Metric>)]
    pub metrics: std::vec::Vec<Metric>,
    /// Which ordered pairs to play: all, self (diagonal) or cross.
    #[arg(long, default_value = "all")]
    pub pairing: PairFilter,
    /// Metric seeds; each draws its own common episode-seed set.
    #[arg(long, default_value = "0,1,2", value_parser = parse_list::<u64>)]
    pub seeds: std::vec::Vec<u64>,
    /// Decoding for success rates.
    #[arg(long, default_value = "sample", value_parser = parse_mode)]
    pub sr_decoding: SelectMode,
    /// Decoding for the messages behind LS and topsim.
    #[arg(long, default_value = "greedy", value_parser = parse_mode)]
    pub message_decoding: SelectMode,
    #[arg(long, default_value = "replay")]
    pub ls_protocol: LsProtocol,
    /// Score pool for evaluation episodes (Train, Test, High).
    #[arg(long)]
    pub score_split: Option<ScoreSplit>,
    /// Also write the first N episodes of each pair (first metric seed, SR
    /// decoding) as JSON-lines traces under `<out>/traces/`.
    #[arg(long, default_value_t = 0)]
    pub trace: usize,
    /// Output directory; defaults to `<ckpt>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn fmt(m: Option<MeanStd>) -> String {
    m.map_or("n/a".into(), |m| format!("{:.3} ± {:.3}", m.mean, m.std))
}

pub fn print_summary(r: &MetricsReport) {
    println!("{}  (n_pop {}, {} episodes × {} seeds)", r.experiment, r.n_pop, r.options.episodes, r.seeds.len());
    println!("  Self-SR   {}", fmt(r.summary.self_sr));
    println!("  Cross-SR  {}", fmt(r.summary.cross_sr));
    println!("  IC        {}", fmt(r.summary.ic));
    println!("  LS        {}", fmt(r.summary.ls));
    println!("  topsim    {}", fmt(r.summary.topsim));
    for (name, curve) in [("SR", &r.sr_curve), ("LS", &r.ls_curve)] {
        if let Some(c) = curve {
            for p in c {
                println!("  {name} @ distance {}: {:.3} ± {:.3} ({} pairs)", p.distance, p.mean, p.std, p.pairs);
            }
        }
    }
}

pub fn run(a: Args) -> Result<()> {
    if a.episodes == 0 {
        return Err(anyhow::anyhow!("--episodes must be positive")).tag(CONFIG);
    }
    if a.seeds.is_empty() {
        bail!("--seeds is empty");
    }
    let (pop, mut cfg) = run::load_checkpoint(&a.ckpt)?;
    if let Some(split) = a.score_split {
        cfg.env.score_split = split;
    }
    let opts = EvalOptions {
        episodes: a.episodes,
        metric_seeds: a.seeds.clone(),
        pairing: a.pairing,
        sr_mode: a.sr_decoding,
        message_mode: a.message_decoding,
        ls_protocol: a.ls_protocol,
        topsim: a.metrics.contains(&Metric::Topsim),
        ls: a.metrics.contains(&Metric::Ls),
    };
    let ring = cfg.name.topology.kind == TopologyKind::Ring;
    let manifest = RunManifest::new("eval", &cfg, a.seeds.clone());
    let report = evaluate_population(&cfg.name.to_string(), &cfg.env, &pop.agents, &opts, ring)?;
    let out = a.out.unwrap_or_else(|| a.ckpt.join("eval"));
    run::ensure_dir(&out)?;
    let (json, csv) = (out.join("metrics.json"), out.join("metrics.csv"));
    run::write_json(&json, &report)?;
    run::write_text(&csv, &report.to_csv())?;
    let mut outputs = vec![json, csv];
    if a.trace > 0 {
        let dir = out.join("traces");
        run::ensure_dir(&dir)?;
        let n = pop.agents.len();
        let seeds = episode_seeds(a.seeds[0], a.trace.min(a.episodes));
        for i in 0..n {
            for j in (0..n).filter(|&j| a.pairing.admits(i, j)) {
                for (k, &seed) in seeds.iter().enumerate() {
                    let steps = trace_episode(&cfg.env, &pop.agents, [i, j], seed, a.sr_decoding)?;
                    let mut buf = Vec::new();
                    write_trace(&mut buf, &steps)?;
                    let path = dir.join(format!("{i}-{j}-{k}.jsonl"));
                    run::write_text(&path, std::str::from_utf8(&buf)?)?;
                    outputs.push(path);
                }
            }
        }
    }
    manifest.finish(&out, outputs)?;
    print_summary(&report);
    Ok(())
}
