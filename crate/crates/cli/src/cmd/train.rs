use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;

use crate::exit::{Tag, CONFIG};
use crate::run::{self, parse_steps, RunManifest};
use foraging::population::{train, ExperimentConfig, MANIFEST, TRAINING_LOG};

#[derive(ClapArgs)]
pub struct Args {
    /// Experiment config (sections [experiment], [env], [ppo]).
    pub config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `runs/<experiment>-s<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Total environment steps; also sets the lr anneal horizon.
    #[arg(long, value_parser = parse_steps)]
    pub steps_override: Option<u64>,
    /// Continue from the snapshot in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Print a progress line every this many iterations (0 = silent).
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
}

pub fn apply_overrides(mut cfg: ExperimentConfig, seed: Option<u64>, steps: Option<u64>) -> Result<ExperimentConfig> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = steps {
        cfg.ppo.total_steps = t;
    }
    cfg.validate().tag(CONFIG)?;
    Ok(cfg)
}

pub fn run(a: Args) -> Result<()> {
    let cfg = apply_overrides(run::read_config(&a.config)?, a.seed, a.steps_override)?;
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-s{}", cfg.name, cfg.seed)));
    run::ensure_dir(&out)?;
    let manifest = RunManifest::new("train", &cfg, vec![cfg.seed]);
    let every = a.log_every;
    eprintln!(
        "training {} (seed {}) for {} steps into {}",
        cfg.name,
        cfg.seed,
        cfg.ppo.total_steps,
        out.display()
    );
    let mut iteration = 0u64;
    let trainer = train(&cfg, &out, a.resume, |t, report| {
        iteration += 1;
        if every > 0 && iteration.is_multiple_of(every) {
            let n = report.episodes.len().max(1) as f64;
            let sr = report.episodes.iter().filter(|e| e.success).count() as f64 / n;
            let ent_m: f64 = report.rows.iter().map(|r| r.message_entropy).sum::<f64>() / report.rows.len() as f64;
            eprintln!("step {:>12}  lr {:.2e}  sr {:.3}  msg-entropy {:.3}", t.step(), t.current_lr(), sr, ent_m);
        }
    })?;
    let mut outputs = vec![out.join(MANIFEST), out.join(TRAINING_LOG)];
    outputs.extend((0..trainer.population().len()).map(|k| out.join(foraging::population::agent_file(k))));
    manifest.finish(&out, outputs)?;
    eprintln!("done at step {}", trainer.step());
    Ok(())
}
