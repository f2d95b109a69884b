//! Checkpoint directory: `manifest.json`, one `agent_<k>.bin` tensor blob per
//! agent (parameters followed by Adam moments), and the training log.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::agent::{AgentParams, AgentSpec};
use crate::error::{Error, Result};
use crate::fsio::{read, read_string, write_atomic};
use crate::tensor::{read_dump, write_dump, AdamState, DumpEntry, Tensor};

pub const MANIFEST: &str = "manifest.json";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub id: usize,
    pub file: String,
    pub adam_step: u64,
    pub tensors: Vec<DumpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub experiment: String,
    pub config: String,
    pub config_hash: String,
    /// Environment steps consumed when the snapshot was taken.
    pub step: u64,
    pub agents: Vec<AgentEntry>,
}

/// Every agent of a run together with its optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub spec: AgentSpec,
    pub agents: Vec<AgentParams<f32>>,
    pub adam: Vec<AdamState<f32>>,
    pub step: u64,
}

/// Per-agent initialisation seed.
pub fn agent_seed(run_seed: u64, agent: usize) -> u64 {
    run_seed.wrapping_mul(1_000_003).wrapping_add(agent as u64)
}

impl Population {
    pub fn init(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = AgentSpec::for_env(&cfg.env);
        let agents = (0..cfg.name.topology.n_pop)
            .map(|k| AgentParams::init(&spec, agent_seed(cfg.seed, k)))
            .collect::<Result<Vec<_>>>()?;
        let adam = agents.iter().map(|a| AdamState::new(a.tensors())).collect();
        Ok(Population {
            spec,
            agents,
            adam,
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

pub fn agent_file(k: usize) -> String {
    format!("agent_{k}.bin")
}

pub fn save_population(dir: &Path, pop: &Population, cfg: &ExperimentConfig) -> Result<()> {
    let mut entries = Vec::with_capacity(pop.len());
    for (k, (agent, adam)) in pop.agents.iter().zip(&pop.adam).enumerate() {
        let names: Vec<String> = agent.named().map(|(n, _)| n).collect();
        let moments: Vec<(String, Tensor<f32>)> = names
            .iter()
            .zip(agent.tensors())
            .zip(adam.m.iter().zip(&adam.v))
            .flat_map(|((n, t), (m, v))| {
                let shape = t.shape().to_vec();
                [
                    (format!("adam.m.{n}"), Tensor::new(shape.clone(), m.clone())),
                    (format!("adam.v.{n}"), Tensor::new(shape, v.clone())),
                ]
            })
            .map(|(n, t)| t.map(|t| (n, t)))
            .collect::<Result<_>>()?;
        let (tensors, blob) = write_dump(agent.named().chain(moments.iter().map(|(n, t)| (n.clone(), t))));
        let file = agent_file(k);
        write_atomic(&dir.join(&file), &blob)?;
        entries.push(AgentEntry {
            id: k,
            file,
            adam_step: adam.step,
            tensors,
        });
    }
    let manifest = Manifest {
        format: FORMAT_VERSION,
        experiment: cfg.name.to_string(),
        config: cfg.to_text(),
        config_hash: cfg.hash(),
        step: pop.step,
        agents: entries,
    };
    write_atomic(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::Checkpoint(format!("{} has no {MANIFEST}", dir.display())));
    }
    let m: Manifest = serde_json::from_str(&read_string(&path)?)?;
    if m.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint format {}", m.format)));
    }
    Ok(m)
}

/// Loads a population, checking it against `expected` when given.
pub fn load_population(dir: &Path, expected: Option<&ExperimentConfig>) -> Result<(Population, ExperimentConfig)> {
    let m = read_manifest(dir)?;
    let cfg = ExperimentConfig::from_text(&m.config)?;
    if cfg.hash() != m.config_hash {
        return Err(Error::ConfigHash {
            expected: cfg.hash(),
            found: m.config_hash,
        });
    }
    if let Some(exp) = expected {
        if exp.hash() != m.config_hash {
            return Err(Error::ConfigHash {
                expected: exp.hash(),
                found: m.config_hash,
            });
        }
    }
    let n = cfg.name.topology.n_pop;
    let spec = AgentSpec::for_env(&cfg.env);
    let mut agents = Vec::with_capacity(n);
    let mut adam = Vec::with_capacity(n);
    for k in 0..n {
        let missing = || Error::MissingAgent {
            dir: PathBuf::from(dir),
            agent: k,
        };
        let entry = m.agents.iter().find(|e| e.id == k).ok_or_else(missing)?;
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(missing());
        }
        let mut tensors = read_dump::<f32>(&entry.tensors, &read(&path)?)?.into_iter();
        let n_params = spec.param_shapes().len();
        let params: Vec<Tensor<f32>> = tensors.by_ref().take(n_params).map(|(_, t)| t).collect();
        let params = AgentParams::from_tensors(&spec, params)?;
        let rest: Vec<Tensor<f32>> = tensors.map(|(_, t)| t).collect();
        if rest.len() != 2 * n_params {
            return Err(Error::Checkpoint(format!("agent {k}: expected {} optimiser tensors, found {}", 2 * n_params, rest.len())));
        }
        let (mut m_, mut v_) = (Vec::new(), Vec::new());
        for pair in rest.chunks(2) {
            m_.push(pair[0].data().to_vec());
            v_.push(pair[1].data().to_vec());
        }
        adam.push(AdamState {
            step: entry.adam_step,
            m: m_,
            v: v_,
        });
        agents.push(params);
    }
    Ok((
        Population {
            spec,
            agents,
            adam,
            step: m.step,
        },
        cfg,
    ))
}
