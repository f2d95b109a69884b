//! The population training loop: pair, collect, update every agent, log.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_population, save_population, Population, TRAINING_LOG};
use super::{sample_pairing, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fsio::{read_string, write_atomic};
use crate::ppo::{lr_schedule, ppo_update, EpisodeSummary, TrainStats, VecEnv};

pub const TRAINER_STATE: &str = "trainer_state.json";

/// One row of `training_log.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub agent_id: usize,
    /// Mean return over episodes this agent finished in the iteration.
    pub mean_return: f64,
    pub action_entropy: f64,
    pub message_entropy: f64,
    pub value_loss: f64,
    pub lr: f64,
    pub success_rate: f64,
}

impl LogRow {
    pub const HEADER: &'static str =
        "step,agent_id,mean_return,action_entropy,message_entropy,value_loss,lr,success_rate";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.agent_id,
            self.mean_return,
            self.action_entropy,
            self.message_entropy,
            self.value_loss,
            self.lr,
            self.success_rate
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Checkpoint(format!("malformed training log line `{line}`"));
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(LogRow {
            step: f[0].parse().map_err(|_| bad())?,
            agent_id: f[1].parse().map_err(|_| bad())?,
            mean_return: num(2)?,
            action_entropy: num(3)?,
            message_entropy: num(4)?,
            value_loss: num(5)?,
            lr: num(6)?,
            success_rate: num(7)?,
        })
    }
}

pub fn read_training_log(path: &Path) -> Result<Vec<LogRow>> {
    read_string(path)?
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(LogRow::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub rows: Vec<LogRow>,
    pub episodes: Vec<EpisodeSummary>,
    pub stats: Vec<TrainStats>,
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    iteration: u64,
    venv: VecEnv,
    rng: ChaCha8Rng,
    pair_counts: Vec<([usize; 2], u64)>,
}

const ENV_SALT: u64 = 0x656e_7673;

fn update_rng(seed: u64, iteration: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ iteration.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(agent as u64 + 1);
    rng
}

pub struct Trainer {
    cfg: ExperimentConfig,
    pop: Population,
    venv: VecEnv,
    rng: ChaCha8Rng,
    iteration: u64,
    pair_counts: BTreeMap<[usize; 2], u64>,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let pop = Population::init(cfg)?;
        let venv = VecEnv::new(&cfg.env, cfg.ppo.n_envs, pop.spec.hidden, cfg.seed ^ ENV_SALT)?;
        Ok(Trainer {
            cfg: cfg.clone(),
            pop,
            venv,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            iteration: 0,
            pair_counts: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    pub fn step(&self) -> u64 {
        self.pop.step
    }

    /// Rollout chunks completed so far.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Per-slot length of the next chunk. The last chunk is cut short so the
    /// run never exceeds `total_steps`.
    fn chunk_len(&self) -> usize {
        let ppo = &self.cfg.ppo;
        let left = ppo.total_steps.saturating_sub(self.pop.step) / ppo.n_envs as u64;
        left.min(ppo.rollout_len as u64) as usize
    }

    /// True once fewer than `n_envs` steps of budget remain.
    pub fn is_finished(&self) -> bool {
        self.chunk_len() == 0
    }

    /// How often each ordered pair was assigned to an env slot.
    pub fn pair_counts(&self) -> &BTreeMap<[usize; 2], u64> {
        &self.pair_counts
    }

    pub fn current_lr(&self) -> f64 {
        let p = &self.cfg.ppo;
        if p.anneal_lr {
            lr_schedule(self.pop.step, p.total_steps, p.learning_rate)
        } else {
            p.learning_rate
        }
    }

    /// One rollout chunk in every env slot followed by one update per agent.
    pub fn iterate(&mut self) -> Result<IterationReport> {
        let len = self.chunk_len();
        if len == 0 {
            return Err(Error::Config(format!("step budget of {} is used up", self.cfg.ppo.total_steps)));
        }
        let ppo = self.cfg.ppo.clone();
        let (topo, regime) = (self.cfg.name.topology, self.cfg.name.regime);
        for slot in 0..self.venv.len() {
            let pair = sample_pairing(&topo, regime, &mut self.rng);
            if !regime.allows(&topo, pair) {
                return Err(Error::Config(format!("illegal pairing {pair:?} for {}", self.cfg.name)));
            }
            *self.pair_counts.entry(pair).or_insert(0) += 1;
            self.venv.assign(slot, pair)?;
        }
        let (buffers, episodes) = self.venv.collect(&self.pop.agents, len, ppo.gamma, ppo.gae_lambda)?;

        let lr = self.current_lr();
        let (seed, iteration) = (self.cfg.seed, self.iteration);
        let stats: Vec<TrainStats> = self
            .pop
            .agents
            .par_iter_mut()
            .zip(self.pop.adam.par_iter_mut())
            .zip(buffers.par_iter())
            .enumerate()
            .map(|(k, ((params, adam), buf))| {
                let mut rng = update_rng(seed, iteration, k);
                ppo_update(params, adam, buf, &ppo, lr, &mut rng)
            })
            .collect::<Result<_>>()?;

        self.pop.step += (len * ppo.n_envs) as u64;
        self.iteration += 1;

        let rows = stats
            .iter()
            .enumerate()
            .map(|(k, st)| {
                let mine: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.pair.contains(&k)).collect();
                let n = mine.len() as f64;
                let (mean_return, success_rate) = if mine.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    (
                        mine.iter().map(|e| e.ret).sum::<f64>() / n,
                        mine.iter().filter(|e| e.success).count() as f64 / n,
                    )
                };
                let seen = st.updates > 0;
                LogRow {
                    step: self.pop.step,
                    agent_id: k,
                    mean_return,
                    action_entropy: if seen { st.action_entropy } else { f64::NAN },
                    message_entropy: if seen { st.message_entropy } else { f64::NAN },
                    value_loss: if seen { st.value_loss } else { f64::NAN },
                    lr,
                    success_rate,
                }
            })
            .collect();
        Ok(IterationReport { rows, episodes, stats })
    }

    /// Writes the population snapshot plus everything needed to resume.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let state = TrainerState {
            iteration: self.iteration,
            venv: self.venv.clone(),
            rng: self.rng.clone(),
            pair_counts: self.pair_counts.iter().map(|(k, v)| (*k, *v)).collect(),
        };
        write_atomic(&dir.join(TRAINER_STATE), serde_json::to_string(&state)?.as_bytes())?;
        save_population(dir, &self.pop, &self.cfg)
    }

    pub fn resume(dir: &Path, expected: Option<&ExperimentConfig>) -> Result<Self> {
        let (pop, cfg) = load_population(dir, expected)?;
        let path = dir.join(TRAINER_STATE);
        if !path.exists() {
            return Err(Error::Checkpoint(format!("{} has no {TRAINER_STATE}; cannot resume", dir.display())));
        }
        let state: TrainerState = serde_json::from_str(&read_string(&path)?)?;
        if state.venv.len() != cfg.ppo.n_envs {
            return Err(Error::Checkpoint("trainer state does not match n_envs".into()));
        }
        Ok(Trainer {
            cfg,
            pop,
            venv: state.venv,
            rng: state.rng,
            iteration: state.iteration,
            pair_counts: state.pair_counts.into_iter().collect(),
        })
    }
}

/// Runs (or resumes) `cfg` to `total_steps`, snapshotting into `dir`.
///
/// `on_iteration` sees every report as it is produced.
pub fn train(
    cfg: &ExperimentConfig,
    dir: &Path,
    resume: bool,
    mut on_iteration: impl FnMut(&Trainer, &IterationReport),
) -> Result<Trainer> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let log_path = dir.join(TRAINING_LOG);
    let mut trainer = if resume && dir.join(super::checkpoint::MANIFEST).exists() {
        let t = Trainer::resume(dir, Some(cfg))?;
        // Drop rows written after the snapshot so the log replays cleanly.
        let kept: Vec<String> = if log_path.exists() {
            read_training_log(&log_path)?
                .into_iter()
                .filter(|r| r.step <= t.step())
                .map(|r| r.to_csv())
                .collect()
        } else {
            Vec::new()
        };
        let mut text = format!("{}\n", LogRow::HEADER);
        kept.iter().for_each(|l| {
            text.push_str(l);
            text.push('\n');
        });
        write_atomic(&log_path, text.as_bytes())?;
        t
    } else {
        write_atomic(&log_path, format!("{}\n", LogRow::HEADER).as_bytes())?;
        Trainer::new(cfg)?
    };

    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let every = cfg.checkpoint_every;
    while !trainer.is_finished() {
        let before = trainer.step();
        let report = trainer.iterate()?;
        for row in &report.rows {
            writeln!(log, "{}", row.to_csv()).map_err(|e| Error::io(&log_path, e))?;
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        on_iteration(&trainer, &report);
        if every > 0 && before / every != trainer.step() / every && !trainer.is_finished() {
            trainer.save(dir)?;
        }
    }
    trainer.save(dir)?;
    Ok(trainer)
}
