//! Shared plumbing: thread setup, checkpoint loading and run manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::exit::{Tag, CHECKPOINT, CONFIG};
use foraging::fsio::write_atomic;
use foraging::population::{load_population, ExperimentConfig, Population};

pub const THREADS_VAR: &str = "FORAGE_THREADS";
pub const RUN_MANIFEST: &str = "run.json";

/// Sizes the global worker pool from `FORAGE_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("{THREADS_VAR}={v} is not a thread count"))?;
    if n == 0 {
        bail!("{THREADS_VAR} must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Parses step counts written either as integers or in float notation (`5e6`).
pub fn parse_steps(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a step count"))?;
    if !(f.is_finite() && f >= 1.0 && f.fract() == 0.0 && f <= u64::MAX as f64) {
        return Err(format!("`{s}` is not a positive whole number of steps"));
    }
    Ok(f as u64)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

pub fn load_checkpoint(dir: &Path) -> Result<(Population, ExperimentConfig)> {
    load_population(dir, None)
        .with_context(|| format!("loading checkpoint {}", dir.display()))
        .tag(CHECKPOINT)
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .tag(CONFIG)?;
    ExperimentConfig::from_text(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .tag(CONFIG)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Provenance of one subcommand invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub experiment: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// SHA-256 of the running executable.
    pub code_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn code_hash() -> String {
    std::env::current_exe()
        .and_then(std::fs::read)
        .map(|bytes| hex::encode(Sha256::digest(&bytes)))
        .unwrap_or_else(|_| "unknown".into())
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            experiment: cfg.name.to_string(),
            config_hash: cfg.hash(),
            seeds,
            code_hash: code_hash(),
            started_unix: unix_now(),
            finished_unix: 0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path, outputs: Vec<PathBuf>) -> Result<()> {
        self.finished_unix = unix_now();
        self.outputs = outputs;
        write_json(&dir.join(RUN_MANIFEST), &self)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
