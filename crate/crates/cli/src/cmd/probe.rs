use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::Args as ClapArgs;

use crate::cmd::eval::parse_mode;
use crate::exit::{Tag, CONFIG};
use crate::run::{self, RunManifest};
use foraging::agent::SelectMode;
use foraging::env::Game;
use foraging::probe::{probe_population, CvConfig, FeatureMode, ProbeOptions, Target};

#[derive(ClapArgs)]
pub struct Args {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Expected game; must match the checkpoint.
    #[arg(long)]
    pub game: Option<Game>,
    /// score, vpos, hpos, time or all.
    #[arg(long, default_value = "all")]
    pub target: String,
    /// integer, embedding or both.
    #[arg(long, default_value = "both")]
    pub features: String,
    /// Message chains per agent.
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "greedy", value_parser = parse_mode)]
    pub message_decoding: SelectMode,
    /// Output directory; defaults to `<ckpt>/probe`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: Args) -> Result<()> {
    let (pop, cfg) = run::load_checkpoint(&a.ckpt)?;
    let game = cfg.env.game;
    if let Some(g) = a.game {
        if g != game {
            return Err(anyhow!("--game {g} but checkpoint {} plays {game}", cfg.name)).tag(CONFIG);
        }
    }
    let targets: Vec<Target> = if a.target == "all" {
        Target::for_game(game).to_vec()
    } else {
        let t: Target = a.target.parse().tag(CONFIG)?;
        t.classes(game, cfg.env.grid_h, cfg.env.grid_w).tag(CONFIG)?;
        vec![t]
    };
    let modes = match a.features.as_str() {
        "both" => vec![FeatureMode::IntegerMsg, FeatureMode::MsgEmbedding],
        other => vec![other.parse::<FeatureMode>().tag(CONFIG)?],
    };
    let opts = ProbeOptions {
        targets,
        modes,
        samples: a.samples,
        seed: a.seed,
        message_mode: a.message_decoding,
        cv: CvConfig::default(),
    };
    let manifest = RunManifest::new("probe", &cfg, vec![a.seed]);
    let report = probe_population(&cfg.name.to_string(), &cfg.env, &pop.agents, &opts)?;
    let out = a.out.unwrap_or_else(|| a.ckpt.join("probe"));
    run::ensure_dir(&out)?;
    let (csv, json) = (out.join("probe.csv"), out.join("probe.json"));
    run::write_text(&csv, &report.to_csv())?;
    run::write_json(&json, &report)?;
    manifest.finish(&out, vec![csv, json])?;
    println!("{} probe, {} chains per agent", report.experiment, report.samples_per_agent);
    for s in &report.summary {
        println!(
            "  {:<6} {:<9} width {:>4}  acc {:.3} ± {:.3}  chance {:.3}",
            s.target.to_string(),
            s.mode.to_string(),
            s.feature_width,
            s.accuracy.mean,
            s.accuracy.std,
            s.chance
        );
    }
    Ok(())
}
