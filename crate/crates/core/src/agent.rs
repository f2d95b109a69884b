//! One agent's recurrent policy: grid, position and message encoders feed an
//! LSTM whose hidden state drives the action, message and value heads.
//!
//! Each agent owns a private lookup table for the tokens it *receives*; the
//! integer on the wire means whatever the receiver's table says it means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::tensor::{
    argmax, lstm_cell, orthogonal_init, Categorical, LstmVars, Real, Tape, Tensor, Var,
};

const ENCODER_GAIN: f64 = std::f64::consts::SQRT_2;
const HEAD_GAIN: f64 = 0.01;

/// Layer sizes of one agent network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentSpec {
    pub grid_in: usize,
    pub grid_layers: Vec<usize>,
    pub pos_out: usize,
    pub embed_dim: usize,
    pub msg_out: usize,
    pub hidden: usize,
    pub n_actions: usize,
    pub vocab: usize,
}

impl AgentSpec {
    pub fn for_env(cfg: &EnvConfig) -> Self {
        AgentSpec {
            grid_in: cfg.grid_features(),
            grid_layers: vec![256, 256, 128, 16],
            pos_out: 4,
            embed_dim: 16,
            msg_out: 16,
            hidden: 128,
            n_actions: Action::COUNT,
            vocab: cfg.vocab_size,
        }
    }

    pub fn lstm_in(&self) -> usize {
        self.grid_layers.last().copied().unwrap_or(self.grid_in) + self.pos_out + self.msg_out
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut prev = self.grid_in;
        for (i, &n) in self.grid_layers.iter().enumerate() {
            out.push((format!("grid.{i}.weight"), vec![n, prev]));
            out.push((format!("grid.{i}.bias"), vec![n]));
            prev = n;
        }
        let h4 = 4 * self.hidden;
        out.extend([
            ("pos.weight".to_string(), vec![self.pos_out, 2]),
            ("pos.bias".to_string(), vec![self.pos_out]),
            ("msg.table".to_string(), vec![self.vocab, self.embed_dim]),
            ("msg.weight".to_string(), vec![self.msg_out, self.embed_dim]),
            ("msg.bias".to_string(), vec![self.msg_out]),
            ("lstm.weight_ih".to_string(), vec![h4, self.lstm_in()]),
            ("lstm.weight_hh".to_string(), vec![h4, self.hidden]),
            ("lstm.bias".to_string(), vec![h4]),
            ("action_head.weight".to_string(), vec![self.n_actions, self.hidden]),
            ("action_head.bias".to_string(), vec![self.n_actions]),
            ("msg_head.weight".to_string(), vec![self.vocab, self.hidden]),
            ("msg_head.bias".to_string(), vec![self.vocab]),
            ("value_head.weight".to_string(), vec![1, self.hidden]),
            ("value_head.bias".to_string(), vec![1]),
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    fn layout(&self) -> Layout {
        let l = self.grid_layers.len();
        let base = 2 * l;
        Layout {
            grid: (0..l).map(|i| (2 * i, 2 * i + 1)).collect(),
            pos: (base, base + 1),
            table: base + 2,
            msg: (base + 3, base + 4),
            lstm: (base + 5, base + 6, base + 7),
            action: (base + 8, base + 9),
            message: (base + 10, base + 11),
            value: (base + 12, base + 13),
        }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    grid: Vec<(usize, usize)>,
    pos: (usize, usize),
    table: usize,
    msg: (usize, usize),
    lstm: (usize, usize, usize),
    action: (usize, usize),
    message: (usize, usize),
    value: (usize, usize),
}

/// All learnable tensors of one agent, in [`AgentSpec::param_shapes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams<R> {
    spec: AgentSpec,
    tensors: Vec<Tensor<R>>,
}

impl<R: Real> AgentParams<R> {
    pub fn init(spec: &AgentSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = spec.layout();
        let mut tensors = Vec::new();
        for (name, shape) in spec.param_shapes() {
            let t = if shape.len() == 1 {
                Tensor::zeros(shape)
            } else {
                let (rows, cols) = (shape[0], shape[1]);
                let idx = tensors.len();
                let is_head = [layout.action.0, layout.message.0, layout.value.0].contains(&idx);
                let gain = if is_head { HEAD_GAIN } else { ENCODER_GAIN };
                if name.starts_with("lstm.") {
                    gate_blocks(rows, cols, gain, &mut rng)?
                } else {
                    orthogonal_init(rows, cols, gain, &mut rng)?
                }
            };
            tensors.push(t.trainable());
        }
        Ok(AgentParams {
            spec: spec.clone(),
            tensors,
        })
    }

    pub fn from_tensors(spec: &AgentSpec, tensors: Vec<Tensor<R>>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::shape("agent params", &[shapes.len()], &[tensors.len()]));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    t.shape()
                )));
            }
        }
        Ok(AgentParams {
            spec: spec.clone(),
            tensors: tensors.into_iter().map(|t| if t.is_trainable() { t } else { t.trainable() }).collect(),
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn tensors(&self) -> &[Tensor<R>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<R>] {
        &mut self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (String, &Tensor<R>)> {
        self.spec.param_shapes().into_iter().map(|(n, _)| n).zip(self.tensors.iter())
    }

    pub fn msg_table(&self) -> &Tensor<R> {
        &self.tensors[self.spec.layout().table]
    }

    pub fn msg_table_mut(&mut self) -> &mut Tensor<R> {
        let i = self.spec.layout().table;
        &mut self.tensors[i]
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Order-sensitive FNV-1a hash over the raw parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tensors {
            for v in t.data() {
                h ^= v.as_f64().to_bits();
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    pub fn cast<S: Real>(&self) -> AgentParams<S> {
        AgentParams {
            spec: self.spec.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Binds every parameter onto `tape` under its storage index.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, R>) -> Bound {
        Bound {
            vars: self.tensors.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect(),
            layout: self.spec.layout(),
        }
    }
}

fn gate_blocks<R: Real>(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Result<Tensor<R>> {
    let block = rows / 4;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..4 {
        data.extend_from_slice(orthogonal_init::<R, _>(block, cols, gain, rng)?.data());
    }
    Tensor::new(vec![rows, cols], data)
}

/// Parameter handles recorded on one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    layout: Layout,
}

impl Bound {
    fn pair(&self, (w, b): (usize, usize)) -> (Var, Var) {
        (self.vars[w], self.vars[b])
    }

    pub fn lstm(&self) -> LstmVars {
        let (wi, wh, b) = self.layout.lstm;
        LstmVars {
            w_ih: self.vars[wi],
            w_hh: self.vars[wh],
            bias: self.vars[b],
        }
    }
}

/// A batch of observations laid out row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch<R> {
    pub n: usize,
    pub grid: Vec<R>,
    pub pos: Vec<R>,
    pub msg: Vec<usize>,
}

impl<R: Real> ObsBatch<R> {
    pub fn from_obs<'o>(obs: impl IntoIterator<Item = &'o Observation>) -> Self {
        let mut b = ObsBatch {
            n: 0,
            grid: Vec::new(),
            pos: Vec::new(),
            msg: Vec::new(),
        };
        for o in obs {
            b.push(o);
        }
        b
    }

    pub fn push(&mut self, o: &Observation) {
        self.n += 1;
        self.grid.extend(o.grid.iter().map(|&v| R::from_f64(v as f64)));
        self.pos.extend(o.pos.iter().map(|&v| R::from_f64(v as f64)));
        self.msg.push(o.msg_in);
    }
}

/// Encodes a batch into LSTM inputs (`n × lstm_in`).
pub fn encode<'a, R: Real>(
    tape: &mut Tape<'a, R>,
    bound: &Bound,
    spec: &AgentSpec,
    obs: &ObsBatch<R>,
) -> Result<Var> {
    if obs.grid.len() != obs.n * spec.grid_in {
        return Err(Error::shape("encode grid", &[obs.n, spec.grid_in], &[obs.grid.len()]));
    }
    let mut g = tape.constant(obs.n, spec.grid_in, obs.grid.clone())?;
    for &layer in &bound.layout.grid {
        let (w, b) = bound.pair(layer);
        let z = tape.linear(g, w, Some(b))?;
        g = tape.relu(z);
    }
    let p = tape.constant(obs.n, 2, obs.pos.clone())?;
    let (w, b) = bound.pair(bound.layout.pos);
    let p = tape.linear(p, w, Some(b))?;
    let p = tape.relu(p);

    let emb = tape.embedding(bound.vars[bound.layout.table], &obs.msg)?;
    let (w, b) = bound.pair(bound.layout.msg);
    let m = tape.linear(emb, w, Some(b))?;
    let m = tape.relu(m);
    tape.concat_cols(&[g, p, m])
}

pub struct HeadVars {
    pub action_logits: Var,
    pub msg_logits: Var,
    pub value: Var,
}

pub fn heads<R: Real>(tape: &mut Tape<'_, R>, bound: &Bound, h: Var) -> Result<HeadVars> {
    let (w, b) = bound.pair(bound.layout.action);
    let action_logits = tape.linear(h, w, Some(b))?;
    let (w, b) = bound.pair(bound.layout.message);
    let msg_logits = tape.linear(h, w, Some(b))?;
    let (w, b) = bound.pair(bound.layout.value);
    let value = tape.linear(h, w, Some(b))?;
    Ok(HeadVars {
        action_logits,
        msg_logits,
        value,
    })
}

/// LSTM working memory carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState<R> {
    pub h: Vec<R>,
    pub c: Vec<R>,
}

impl<R: Real> PolicyState<R> {
    pub fn zeros(hidden: usize) -> Self {
        PolicyState {
            h: vec![R::zero(); hidden],
            c: vec![R::zero(); hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput<R> {
    pub action_logits: Vec<R>,
    pub msg_logits: Vec<R>,
    pub value: R,
    pub next_state: PolicyState<R>,
}

/// Batched single-step forward pass without gradient bookkeeping.
pub fn forward_batch<R: Real>(
    params: &AgentParams<R>,
    states: &[&PolicyState<R>],
    obs: &ObsBatch<R>,
) -> Result<Vec<PolicyOutput<R>>> {
    let spec = params.spec();
    let n = obs.n;
    if states.len() != n {
        return Err(Error::shape("forward_batch", &[n], &[states.len()]));
    }
    if let Some(&bad) = obs.msg.iter().find(|&&t| t >= spec.vocab) {
        return Err(Error::TokenRange {
            token: bad,
            vocab: spec.vocab,
        });
    }
    let hd = spec.hidden;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = encode(&mut tape, &bound, spec, obs)?;
    let h0 = tape.constant(n, hd, states.iter().flat_map(|s| s.h.iter().copied()).collect())?;
    let c0 = tape.constant(n, hd, states.iter().flat_map(|s| s.c.iter().copied()).collect())?;
    let (h, c) = lstm_cell(&mut tape, bound.lstm(), x, h0, c0)?;
    let out = heads(&mut tape, &bound, h)?;

    let (na, nv) = (spec.n_actions, spec.vocab);
    let (al, ml, v) = (
        tape.value(out.action_logits),
        tape.value(out.msg_logits),
        tape.value(out.value),
    );
    let (hv, cv) = (tape.value(h), tape.value(c));
    Ok((0..n)
        .map(|i| PolicyOutput {
            action_logits: al[i * na..(i + 1) * na].to_vec(),
            msg_logits: ml[i * nv..(i + 1) * nv].to_vec(),
            value: v[i],
            next_state: PolicyState {
                h: hv[i * hd..(i + 1) * hd].to_vec(),
                c: cv[i * hd..(i + 1) * hd].to_vec(),
            },
        })
        .collect())
}

/// Single-observation forward pass.
pub fn policy_forward<R: Real>(
    params: &AgentParams<R>,
    state: &PolicyState<R>,
    obs: &Observation,
) -> Result<PolicyOutput<R>> {
    let batch = ObsBatch::from_obs([obs]);
    Ok(forward_batch(params, &[state], &batch)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub action: usize,
    pub token: usize,
    pub logp_action: f64,
    pub logp_token: f64,
}

/// Chooses an action and a token from one policy output.
pub fn select<R: Real, G: Rng + ?Sized>(
    out: &PolicyOutput<R>,
    mode: SelectMode,
    rng: &mut G,
) -> Result<Selection> {
    let da = Categorical::from_logits(&out.action_logits)?;
    let dm = Categorical::from_logits(&out.msg_logits)?;
    let (action, token) = match mode {
        SelectMode::Sample => (da.sample(rng), dm.sample(rng)),
        SelectMode::Greedy => (argmax(&out.action_logits), argmax(&out.msg_logits)),
    };
    Ok(Selection {
        action,
        token,
        logp_action: da.log_prob(action),
        logp_token: dm.log_prob(token),
    })
}
