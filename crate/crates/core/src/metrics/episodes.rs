//! Evaluation episodes and the records metrics are computed from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{forward_batch, policy_forward, select, AgentParams, ObsBatch, PolicyState, SelectMode};
use crate::env::{Action, Cell, EnvConfig, Game, Observation, TraceStep, World};
use crate::error::{Error, Result};

/// Ground truth for one item at reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemTruth {
    pub pos: Cell,
    pub score: u32,
    pub spawn_time: usize,
}

/// Everything metrics and probes need from one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub game: Game,
    pub pair: [usize; 2],
    pub items: [ItemTruth; 2],
    /// Item whose score (ScoreG) or spawn (TemporalG) body `b` observes.
    pub assigned: [usize; 2],
    /// Every token each body emitted, one per step.
    pub tokens: [Vec<usize>; 2],
    /// Observation stream each body received, one per step.
    pub inputs: [Vec<Observation>; 2],
    /// First step at which the bodies were adjacent when messages were routed.
    pub first_adjacency: Option<usize>,
    pub success: bool,
    pub len: usize,
}

impl EpisodeRecord {
    /// Message chain of body `b`: the whole episode in ScoreG, from the first
    /// adjacency on in TemporalG (empty if the bodies never met).
    pub fn chain(&self, body: usize) -> &[usize] {
        chain_slice(self.game, self.first_adjacency, &self.tokens[body])
    }

    /// Body index `agent` occupied, preferring body 0 in self-play.
    pub fn body_of(&self, agent: usize) -> Option<usize> {
        self.pair.iter().position(|&a| a == agent)
    }
}

pub(crate) fn chain_slice(game: Game, first_adjacency: Option<usize>, tokens: &[usize]) -> &[usize] {
    match game {
        Game::ScoreG => tokens,
        Game::TemporalG => match first_adjacency {
            Some(t) => &tokens[t.min(tokens.len())..],
            None => &[],
        },
    }
}

/// `n` episode seeds shared by every pairing evaluated under `metric_seed`.
pub fn episode_seeds(metric_seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(metric_seed);
    (0..n).map(|_| rng.random()).collect()
}

fn action_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct Live {
    world: World,
    obs: [Observation; 2],
    states: [PolicyState<f32>; 2],
    rng: ChaCha8Rng,
    record: EpisodeRecord,
}

/// Plays `pair` on every seed in lockstep and returns one record per seed.
/// Action sampling draws from a per-seed stream, so records do not depend on
/// how episodes are batched.
pub fn run_episodes(
    cfg: &EnvConfig,
    agents: &[AgentParams<f32>],
    pair: [usize; 2],
    seeds: &[u64],
    mode: SelectMode,
) -> Result<Vec<EpisodeRecord>> {
    if let Some(&k) = pair.iter().find(|&&k| k >= agents.len()) {
        return Err(Error::Config(format!("pair references agent {k} of {}", agents.len())));
    }
    let hidden = agents[pair[0]].spec().hidden;
    let mut live: Vec<Live> = seeds
        .iter()
        .map(|&seed| {
            let world = World::new(cfg, seed)?;
            let obs = [world.observe(0), world.observe(1)];
            let items = world.items().clone().map(|it| ItemTruth {
                pos: it.pos,
                score: it.score,
                spawn_time: it.spawn_time,
            });
            let record = EpisodeRecord {
                seed,
                game: cfg.game,
                pair,
                items,
                assigned: [world.assigned_item(0), world.assigned_item(1)],
                tokens: [Vec::new(), Vec::new()],
                inputs: [Vec::new(), Vec::new()],
                first_adjacency: None,
                success: false,
                len: 0,
            };
            Ok(Live {
                world,
                obs,
                states: [PolicyState::zeros(hidden), PolicyState::zeros(hidden)],
                rng: action_rng(seed),
                record,
            })
        })
        .collect::<Result<_>>()?;
    let mut done: Vec<Option<EpisodeRecord>> = vec![None; seeds.len()];
    let mut active: Vec<usize> = (0..seeds.len()).collect();

    while !active.is_empty() {
        let mut outs = Vec::with_capacity(2);
        for body in 0..2 {
            let obs = ObsBatch::from_obs(active.iter().map(|&e| &live[e].obs[body]));
            let states: Vec<&PolicyState<f32>> = active.iter().map(|&e| &live[e].states[body]).collect();
            outs.push(forward_batch(&agents[pair[body]], &states, &obs)?);
        }
        let mut still = Vec::with_capacity(active.len());
        for (row, &e) in active.iter().enumerate() {
            let ep = &mut live[e];
            let mut acts = [Action::Pickup; 2];
            let mut toks = [0usize; 2];
            for body in 0..2 {
                let sel = select(&outs[body][row], mode, &mut ep.rng)?;
                acts[body] = Action::from_index(sel.action)?;
                toks[body] = sel.token;
                ep.record.tokens[body].push(sel.token);
                ep.record.inputs[body].push(ep.obs[body].clone());
            }
            if ep.record.first_adjacency.is_none() && ep.world.agents_adjacent() {
                ep.record.first_adjacency = Some(ep.world.t());
            }
            ep.world.route_messages(toks)?;
            let res = ep.world.step(acts)?;
            if res.done {
                ep.record.success = res.info.success;
                ep.record.len = res.info.episode_len;
                let rec = std::mem::replace(&mut ep.record, blank_record());
                done[e] = Some(rec);
            } else {
                ep.states = [outs[0][row].next_state.clone(), outs[1][row].next_state.clone()];
                ep.obs = res.obs;
                still.push(e);
            }
        }
        active = still;
    }
    Ok(done.into_iter().map(|r| r.expect("every episode terminates")).collect())
}

/// Plays one episode of `pair` and logs every step. Positions are where the
/// bodies stood when they acted.
pub fn trace_episode(
    cfg: &EnvConfig,
    agents: &[AgentParams<f32>],
    pair: [usize; 2],
    seed: u64,
    mode: SelectMode,
) -> Result<Vec<TraceStep>> {
    if let Some(&k) = pair.iter().find(|&&k| k >= agents.len()) {
        return Err(Error::Config(format!("pair references agent {k} of {}", agents.len())));
    }
    let hidden = agents[pair[0]].spec().hidden;
    let mut world = World::new(cfg, seed)?;
    let mut obs = [world.observe(0), world.observe(1)];
    let mut states = [PolicyState::zeros(hidden), PolicyState::zeros(hidden)];
    let mut rng = action_rng(seed);
    let mut steps = Vec::new();
    loop {
        let outs = [
            policy_forward(&agents[pair[0]], &states[0], &obs[0])?,
            policy_forward(&agents[pair[1]], &states[1], &obs[1])?,
        ];
        let mut acts = [Action::Pickup; 2];
        let mut toks = [0usize; 2];
        for body in 0..2 {
            let sel = select(&outs[body], mode, &mut rng)?;
            acts[body] = Action::from_index(sel.action)?;
            toks[body] = sel.token;
        }
        let t = world.t();
        let positions = world.agents();
        let delivered = world.route_messages(toks)?;
        let res = world.step(acts)?;
        steps.push(TraceStep {
            t,
            positions,
            actions: acts,
            tokens_delivered: delivered,
            reward: res.reward,
        });
        if res.done {
            return Ok(steps);
        }
        let [a, b] = outs;
        states = [a.next_state, b.next_state];
        obs = res.obs;
    }
}

fn blank_record() -> EpisodeRecord {
    let item = ItemTruth {
        pos: Cell::new(0, 0),
        score: 0,
        spawn_time: 0,
    };
    EpisodeRecord {
        seed: 0,
        game: Game::ScoreG,
        pair: [0, 0],
        items: [item, item],
        assigned: [0, 1],
        tokens: [Vec::new(), Vec::new()],
        inputs: [Vec::new(), Vec::new()],
        first_adjacency: None,
        success: false,
        len: 0,
    }
}

/// Greedy chain `agent` emits when teacher-forced through `inputs`.
pub fn replay_tokens(agent: &AgentParams<f32>, inputs: &[Observation]) -> Result<Vec<usize>> {
    let mut state = PolicyState::zeros(agent.spec().hidden);
    let mut tokens = Vec::with_capacity(inputs.len());
    let mut rng = action_rng(0);
    for o in inputs {
        let out = forward_batch(agent, &[&state], &ObsBatch::from_obs([o]))?.remove(0);
        tokens.push(select(&out, SelectMode::Greedy, &mut rng)?.token);
        state = out.next_state;
    }
    Ok(tokens)
}

/// Teacher-forces many input streams at once; returns one greedy token chain
/// per stream.
pub fn replay_batch(agent: &AgentParams<f32>, streams: &[&[Observation]]) -> Result<Vec<Vec<usize>>> {
    let hidden = agent.spec().hidden;
    let mut states: Vec<PolicyState<f32>> = vec![PolicyState::zeros(hidden); streams.len()];
    let mut tokens: Vec<Vec<usize>> = streams.iter().map(|s| Vec::with_capacity(s.len())).collect();
    let longest = streams.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut rng = action_rng(0);
    for t in 0..longest {
        let rows: Vec<usize> = (0..streams.len()).filter(|&k| t < streams[k].len()).collect();
        let obs = ObsBatch::from_obs(rows.iter().map(|&k| &streams[k][t]));
        let refs: Vec<&PolicyState<f32>> = rows.iter().map(|&k| &states[k]).collect();
        let outs = forward_batch(agent, &refs, &obs)?;
        for (out, &k) in outs.into_iter().zip(&rows) {
            tokens[k].push(select(&out, SelectMode::Greedy, &mut rng)?.token);
            states[k] = out.next_state;
        }
    }
    Ok(tokens)
}
