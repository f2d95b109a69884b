//! Rollout collection over a vector of two-body environment slots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gae::compute_gae;
use crate::agent::{forward_batch, select, AgentParams, ObsBatch, PolicyOutput, PolicyState, SelectMode};
use crate::env::{Action, EnvConfig, Observation, World};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub token: usize,
    pub logp_a: f32,
    pub logp_m: f32,
    pub value: f32,
    pub reward: f32,
    pub done: bool,
}

/// One body's contiguous run of transitions inside one rollout chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub agent: usize,
    pub slot: usize,
    pub body: usize,
    /// LSTM state before the first transition.
    pub entry: PolicyState<f32>,
    pub steps: Vec<Transition>,
    /// Value estimate of the observation following the last transition.
    pub bootstrap: f32,
    pub advantages: Vec<f32>,
    pub returns: Vec<f32>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let r: Vec<f64> = self.steps.iter().map(|s| s.reward as f64).collect();
        let v: Vec<f64> = self.steps.iter().map(|s| s.value as f64).collect();
        let d: Vec<bool> = self.steps.iter().map(|s| s.done).collect();
        let (adv, ret) = compute_gae(&r, &v, &d, self.bootstrap as f64, gamma, lambda)?;
        self.advantages = adv.into_iter().map(|x| x as f32).collect();
        self.returns = ret.into_iter().map(|x| x as f32).collect();
        Ok(())
    }
}

/// Everything one agent experienced during a rollout chunk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub agent: usize,
    pub sequences: Vec<Sequence>,
}

impl RolloutBuffer {
    pub fn transitions(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub slot: usize,
    pub pair: [usize; 2],
    pub success: bool,
    pub ret: f64,
    pub len: usize,
}

/// One environment with its two bodies' recurrent states and sampling stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSlot {
    world: World,
    obs: [Observation; 2],
    states: [PolicyState<f32>; 2],
    pair: [usize; 2],
    ret: f64,
    rng: ChaCha8Rng,
}

impl EnvSlot {
    fn new(cfg: &EnvConfig, hidden: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        let world = World::new(cfg, rng.random())?;
        let obs = [world.observe(0), world.observe(1)];
        Ok(EnvSlot {
            world,
            obs,
            states: [PolicyState::zeros(hidden), PolicyState::zeros(hidden)],
            pair: [0, 0],
            ret: 0.0,
            rng,
        })
    }

    fn restart(&mut self) -> Result<()> {
        let hidden = self.states[0].h.len();
        self.world = World::new(self.world.config(), self.rng.random())?;
        self.obs = [self.world.observe(0), self.world.observe(1)];
        self.states = [PolicyState::zeros(hidden), PolicyState::zeros(hidden)];
        self.ret = 0.0;
        Ok(())
    }

    pub fn pair(&self) -> [usize; 2] {
        self.pair
    }

    pub fn world(&self) -> &World {
        &self.world
    }
}

/// A fixed set of environment slots stepped in lockstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecEnv {
    slots: Vec<EnvSlot>,
}

impl VecEnv {
    /// Slot `s` draws from stream `s` of a ChaCha generator keyed by `seed`.
    pub fn new(cfg: &EnvConfig, n_envs: usize, hidden: usize, seed: u64) -> Result<Self> {
        let slots = (0..n_envs)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                EnvSlot::new(cfg, hidden, rng)
            })
            .collect::<Result<_>>()?;
        Ok(VecEnv { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[EnvSlot] {
        &self.slots
    }

    /// Sets the agents occupying a slot's two bodies. A change of occupant
    /// truncates the running episode and starts a fresh one.
    pub fn assign(&mut self, slot: usize, pair: [usize; 2]) -> Result<()> {
        let s = &mut self.slots[slot];
        if s.pair != pair {
            s.pair = pair;
            s.restart()?;
        }
        Ok(())
    }

    /// Runs every slot for `len` steps and returns one buffer per agent plus
    /// summaries of the episodes that finished.
    pub fn collect(
        &mut self,
        agents: &[AgentParams<f32>],
        len: usize,
        gamma: f64,
        lambda: f64,
    ) -> Result<(Vec<RolloutBuffer>, Vec<EpisodeSummary>)> {
        for s in &self.slots {
            if let Some(&k) = s.pair.iter().find(|&&k| k >= agents.len()) {
                return Err(Error::Config(format!(
                    "pairing references agent {k} but the population has {}",
                    agents.len()
                )));
            }
        }
        let n = self.slots.len();
        let mut seqs: Vec<[Sequence; 2]> = self
            .slots
            .iter()
            .enumerate()
            .map(|(slot, s)| {
                [0, 1].map(|body| Sequence {
                    agent: s.pair[body],
                    slot,
                    body,
                    entry: s.states[body].clone(),
                    steps: Vec::with_capacity(len),
                    bootstrap: 0.0,
                    advantages: Vec::new(),
                    returns: Vec::new(),
                })
            })
            .collect();
        let mut episodes = Vec::new();

        for _ in 0..len {
            let outs = self.forward_all(agents)?;
            for (slot, s) in self.slots.iter_mut().enumerate() {
                let mut acts = [Action::Pickup; 2];
                let mut toks = [0usize; 2];
                for body in 0..2 {
                    let out = &outs[slot][body];
                    let sel = select(out, SelectMode::Sample, &mut s.rng)?;
                    acts[body] = Action::from_index(sel.action)?;
                    toks[body] = sel.token;
                    seqs[slot][body].steps.push(Transition {
                        obs: s.obs[body].clone(),
                        action: sel.action,
                        token: sel.token,
                        logp_a: sel.logp_action as f32,
                        logp_m: sel.logp_token as f32,
                        value: out.value,
                        reward: 0.0,
                        done: false,
                    });
                }
                s.world.route_messages(toks)?;
                let res = s.world.step(acts)?;
                s.ret += res.reward;
                for body in 0..2 {
                    let last = seqs[slot][body].steps.last_mut().expect("pushed above");
                    last.reward = res.reward as f32;
                    last.done = res.done;
                }
                if res.done {
                    episodes.push(EpisodeSummary {
                        slot,
                        pair: s.pair,
                        success: res.info.success,
                        ret: s.ret,
                        len: res.info.episode_len,
                    });
                    s.restart()?;
                } else {
                    s.states = [outs[slot][0].next_state.clone(), outs[slot][1].next_state.clone()];
                    s.obs = res.obs;
                }
            }
        }

        let outs = self.forward_all(agents)?;
        let mut buffers: Vec<RolloutBuffer> = (0..agents.len())
            .map(|agent| RolloutBuffer {
                agent,
                sequences: Vec::new(),
            })
            .collect();
        for (slot, pair) in seqs.into_iter().enumerate() {
            for (body, mut seq) in pair.into_iter().enumerate() {
                seq.bootstrap = outs[slot][body].value;
                seq.compute_advantages(gamma, lambda)?;
                buffers[seq.agent].sequences.push(seq);
            }
        }
        debug_assert_eq!(buffers.iter().map(RolloutBuffer::transitions).sum::<usize>(), 2 * n * len);
        Ok((buffers, episodes))
    }

    /// One batched forward per agent over every body it occupies.
    fn forward_all(&self, agents: &[AgentParams<f32>]) -> Result<Vec<[PolicyOutput<f32>; 2]>> {
        let mut outs: Vec<[Option<PolicyOutput<f32>>; 2]> = vec![[None, None]; self.slots.len()];
        for (k, params) in agents.iter().enumerate() {
            let bodies: Vec<(usize, usize)> = self
                .slots
                .iter()
                .enumerate()
                .flat_map(|(s, slot)| (0..2).filter(move |&b| slot.pair[b] == k).map(move |b| (s, b)))
                .collect();
            if bodies.is_empty() {
                continue;
            }
            let obs = ObsBatch::from_obs(bodies.iter().map(|&(s, b)| &self.slots[s].obs[b]));
            let states: Vec<&PolicyState<f32>> =
                bodies.iter().map(|&(s, b)| &self.slots[s].states[b]).collect();
            for (out, &(s, b)) in forward_batch(params, &states, &obs)?.into_iter().zip(&bodies) {
                outs[s][b] = Some(out);
            }
        }
        Ok(outs
            .into_iter()
            .map(|[a, b]| [a.expect("every body has an agent"), b.expect("every body has an agent")])
            .collect())
    }
}
