//! Random single-primitive tapes and a central finite-difference checker.
//!
//! Each case draws random shapes and values, reduces the primitive's output to
//! a scalar with random weights, and compares the reverse-mode gradient of
//! every input against `(f(x+ε) − f(x−ε)) / 2ε` evaluated in f64.

use foraging::agent::{AgentParams, AgentSpec};
use foraging::env::EnvConfig;
use foraging::ppo::{ppo_loss, MiniBatch, PpoConfig, Sequence, VecEnv};
use foraging::tensor::{lstm_cell, LstmVars, Real, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFIGS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prim {
    Linear,
    LinearNoBias,
    Add,
    Sub,
    Mul,
    Minimum,
    Maximum,
    Scale,
    AddScalar,
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Square,
    Clamp,
    Softmax,
    LogSoftmax,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    Embedding,
    Gather,
    RowScale,
    SumCols,
    Sum,
    Mean,
    Lstm,
}

pub const ALL: [Prim; 28] = [
    Prim::Linear,
    Prim::LinearNoBias,
    Prim::Add,
    Prim::Sub,
    Prim::Mul,
    Prim::Minimum,
    Prim::Maximum,
    Prim::Scale,
    Prim::AddScalar,
    Prim::Relu,
    Prim::Tanh,
    Prim::Sigmoid,
    Prim::Exp,
    Prim::Square,
    Prim::Clamp,
    Prim::Softmax,
    Prim::LogSoftmax,
    Prim::ConcatCols,
    Prim::ConcatRows,
    Prim::SliceCols,
    Prim::SliceRows,
    Prim::Embedding,
    Prim::Gather,
    Prim::RowScale,
    Prim::SumCols,
    Prim::Sum,
    Prim::Mean,
    Prim::Lstm,
];

/// A random instance: inputs (all differentiated), integer side data, and
/// output weights used to reduce to a scalar.
#[derive(Debug, Clone)]
pub struct Case {
    pub prim: Prim,
    pub inputs: Vec<Tensor<f64>>,
    pub index: Vec<usize>,
    pub coef: Vec<f64>,
    pub extra: (usize, usize),
    pub weights: Vec<f64>,
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    let data: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect();
    Tensor::from_f64(vec![r, c], &data).unwrap()
}

/// Values at least `gap` away from every point in `kinks`, so a finite
/// difference never straddles a non-differentiable point.
fn away_from(rng: &mut ChaCha8Rng, r: usize, c: usize, kinks: &[f64], gap: f64) -> Tensor<f64> {
    let data: Vec<f64> = (0..r * c)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.5..1.5);
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                break v;
            }
        })
        .collect();
    Tensor::from_f64(vec![r, c], &data).unwrap()
}

impl Case {
    pub fn random(prim: Prim, rng: &mut ChaCha8Rng) -> Case {
        let r = rng.random_range(1..=4);
        let c = rng.random_range(1..=5);
        let mut index = Vec::new();
        let mut coef = Vec::new();
        let mut extra = (0, 0);
        let inputs = match prim {
            Prim::Linear | Prim::LinearNoBias => {
                let out = rng.random_range(1..=5);
                let mut v = vec![rand_tensor(rng, r, c), rand_tensor(rng, out, c)];
                if prim == Prim::Linear {
                    v.push(rand_tensor(rng, 1, out));
                }
                v
            }
            Prim::Add | Prim::Sub | Prim::Mul => vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c)],
            Prim::Minimum | Prim::Maximum => {
                let a = rand_tensor(rng, r, c);
                let b: Vec<f64> = a
                    .data()
                    .iter()
                    .map(|&x| {
                        let d: f64 = rng.random_range(0.05..1.0);
                        if rng.random_bool(0.5) { x + d } else { x - d }
                    })
                    .collect();
                vec![a, Tensor::from_f64(vec![r, c], &b).unwrap()]
            }
            Prim::Scale | Prim::AddScalar => {
                coef.push(rng.random_range(-2.0..2.0));
                vec![rand_tensor(rng, r, c)]
            }
            Prim::Relu => vec![away_from(rng, r, c, &[0.0], 0.01)],
            Prim::Clamp => {
                let lo: f64 = rng.random_range(-1.0..0.0);
                let hi: f64 = rng.random_range(0.1..1.0);
                coef.extend([lo, hi]);
                vec![away_from(rng, r, c, &[lo, hi], 0.01)]
            }
            Prim::Tanh | Prim::Sigmoid | Prim::Exp | Prim::Square | Prim::Softmax | Prim::LogSoftmax => {
                vec![rand_tensor(rng, r, c)]
            }
            Prim::SumCols | Prim::Sum | Prim::Mean => vec![rand_tensor(rng, r, c)],
            Prim::ConcatCols => {
                let c2 = rng.random_range(1..=4);
                vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c2)]
            }
            Prim::ConcatRows => {
                let r2 = rng.random_range(1..=4);
                vec![rand_tensor(rng, r, c), rand_tensor(rng, r2, c)]
            }
            Prim::SliceCols => {
                let start = rng.random_range(0..c);
                extra = (start, rng.random_range(1..=c - start));
                vec![rand_tensor(rng, r, c)]
            }
            Prim::SliceRows => {
                let start = rng.random_range(0..r);
                extra = (start, rng.random_range(1..=r - start));
                vec![rand_tensor(rng, r, c)]
            }
            Prim::Embedding => {
                let n = rng.random_range(1..=6);
                index = (0..n).map(|_| rng.random_range(0..r)).collect();
                vec![rand_tensor(rng, r, c)]
            }
            Prim::Gather => {
                index = (0..r).map(|_| rng.random_range(0..c)).collect();
                vec![rand_tensor(rng, r, c)]
            }
            Prim::RowScale => {
                coef = (0..r).map(|_| rng.random_range(-2.0..2.0)).collect();
                vec![rand_tensor(rng, r, c)]
            }
            Prim::Lstm => {
                let hidden = rng.random_range(1..=4);
                vec![
                    rand_tensor(rng, r, c),
                    rand_tensor(rng, r, hidden),
                    rand_tensor(rng, r, hidden),
                    rand_tensor(rng, 4 * hidden, c),
                    rand_tensor(rng, 4 * hidden, hidden),
                    rand_tensor(rng, 1, 4 * hidden),
                ]
            }
        };
        let mut case = Case {
            prim,
            inputs,
            index,
            coef,
            extra,
            weights: Vec::new(),
        };
        let n_out = case.output_len();
        case.weights = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        case
    }

    fn output_len(&self) -> usize {
        let inputs: Vec<Tensor<f64>> = self.inputs.iter().map(|t| t.clone().trainable()).collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect();
        let out = self.apply(&mut tape, &vars);
        tape.value(out).len()
    }

    pub fn apply<R: Real>(&self, tape: &mut Tape<'_, R>, v: &[Var]) -> Var {
        let k = |i: usize| R::from_f64(self.coef[i]);
        match self.prim {
            Prim::Linear => tape.linear(v[0], v[1], Some(v[2])).unwrap(),
            Prim::LinearNoBias => tape.linear(v[0], v[1], None).unwrap(),
            Prim::Add => tape.add(v[0], v[1]).unwrap(),
            Prim::Sub => tape.sub(v[0], v[1]).unwrap(),
            Prim::Mul => tape.mul(v[0], v[1]).unwrap(),
            Prim::Minimum => tape.minimum(v[0], v[1]).unwrap(),
            Prim::Maximum => tape.maximum(v[0], v[1]).unwrap(),
            Prim::Scale => tape.scale(v[0], k(0)),
            Prim::AddScalar => tape.add_scalar(v[0], k(0)),
            Prim::Relu => tape.relu(v[0]),
            Prim::Tanh => tape.tanh(v[0]),
            Prim::Sigmoid => tape.sigmoid(v[0]),
            Prim::Exp => tape.exp(v[0]),
            Prim::Square => tape.square(v[0]),
            Prim::Clamp => tape.clamp(v[0], k(0), k(1)),
            Prim::Softmax => tape.softmax(v[0]),
            Prim::LogSoftmax => tape.log_softmax(v[0]),
            Prim::ConcatCols => tape.concat_cols(&[v[0], v[1]]).unwrap(),
            Prim::ConcatRows => tape.concat_rows(&[v[0], v[1]]).unwrap(),
            Prim::SliceCols => tape.slice_cols(v[0], self.extra.0, self.extra.1).unwrap(),
            Prim::SliceRows => tape.slice_rows(v[0], self.extra.0, self.extra.1).unwrap(),
            Prim::Embedding => tape.embedding(v[0], &self.index).unwrap(),
            Prim::Gather => tape.gather(v[0], &self.index).unwrap(),
            Prim::RowScale => {
                let s: Vec<R> = self.coef.iter().map(|&c| R::from_f64(c)).collect();
                tape.row_scale(v[0], &s).unwrap()
            }
            Prim::SumCols => tape.sum_cols(v[0]),
            Prim::Sum => tape.sum(v[0]),
            Prim::Mean => tape.mean(v[0]),
            Prim::Lstm => {
                let p = LstmVars {
                    w_ih: v[3],
                    w_hh: v[4],
                    bias: v[5],
                };
                let (h, c) = lstm_cell(tape, p, v[0], v[1], v[2]).unwrap();
                // Both outputs feed the loss so the cell-state path is checked too.
                tape.concat_cols(&[h, c]).unwrap()
            }
        }
    }

    /// Weighted scalar reduction of the primitive's output, plus the
    /// reverse-mode gradient of every input.
    pub fn loss_and_grads<R: Real>(&self, inputs: &[Tensor<R>]) -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect();
        let out = self.apply(&mut tape, &vars);
        let (r, c) = tape.dims(out);
        let w = tape
            .constant(r, c, self.weights.iter().map(|&x| R::from_f64(x)).collect())
            .unwrap();
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        let value = tape.scalar(loss).as_f64();
        let grads = tape.backward(loss).unwrap();
        let g = (0..inputs.len())
            .map(|i| match grads.get(i) {
                Some(g) => g.iter().map(|x| x.as_f64()).collect(),
                None => vec![0.0; inputs[i].len()],
            })
            .collect();
        (value, g)
    }

    pub fn loss_f64(&self, inputs: &[Tensor<f64>]) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect();
        let out = self.apply(&mut tape, &vars);
        tape.value(out).iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

/// `|a − n| / max(|a|, |n|, 1e-2)`, maximised over coordinates.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-2))
        .fold(0.0, f64::max)
}

/// Compares analytic gradients computed in `R` against f64 central differences
/// taken at the same (R-rounded) point.
pub fn check<R: Real>(case: &Case, eps: f64) -> f64 {
    let inputs_r: Vec<Tensor<R>> = case.inputs.iter().map(|t| t.cast::<R>().trainable()).collect();
    let (_, analytic) = case.loss_and_grads(&inputs_r);
    let base: Vec<Tensor<f64>> = inputs_r.iter().map(|t| t.cast::<f64>().trainable()).collect();
    let mut worst: f64 = 0.0;
    for (i, t) in base.iter().enumerate() {
        let mut numeric = Vec::with_capacity(t.len());
        for j in 0..t.len() {
            let mut plus = base.clone();
            plus[i].data_mut()[j] += eps;
            let mut minus = base.clone();
            minus[i].data_mut()[j] -= eps;
            numeric.push((case.loss_f64(&plus) - case.loss_f64(&minus)) / (2.0 * eps));
        }
        worst = worst.max(max_rel_err(&analytic[i], &numeric));
    }
    worst
}


/// Worst relative error per primitive over `CONFIGS` random cases.
pub fn sweep<R: Real>(eps: f64, seed: u64) -> Vec<(Prim, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ALL.iter()
        .map(|&prim| {
            let worst = (0..CONFIGS)
                .map(|_| check::<R>(&Case::random(prim, &mut rng), eps))
                .fold(0.0, f64::max);
            (prim, worst)
        })
        .collect()
}

fn tiny_spec() -> AgentSpec {
    AgentSpec {
        grid_in: 18,
        grid_layers: vec![6, 5],
        pos_out: 2,
        embed_dim: 3,
        msg_out: 3,
        hidden: 4,
        n_actions: 5,
        vocab: 4,
    }
}

/// Agent 0's buffer from a short rollout of two fresh agents, as one minibatch.
fn rollout_batch(seed: u64) -> (AgentParams<f32>, MiniBatch<f32>) {
    let spec = tiny_spec();
    let agents: Vec<AgentParams<f32>> = (0..2).map(|k| AgentParams::init(&spec, seed * 10 + k).unwrap()).collect();
    let mut env = VecEnv::new(&EnvConfig::score_g(), 2, spec.hidden, seed).unwrap();
    for s in 0..2 {
        env.assign(s, [0, 1]).unwrap();
    }
    env.collect(&agents, 5, 0.99, 0.95).unwrap();
    let (bufs, _) = env.collect(&agents, 4, 0.99, 0.95).unwrap();
    let seqs: Vec<&Sequence> = bufs[0].sequences.iter().collect();
    let adv: Vec<&[f32]> = seqs.iter().map(|s| s.advantages.as_slice()).collect();
    (agents[0].clone(), MiniBatch::build(&seqs, &adv).unwrap())
}

fn ppo_loss_value(p: &AgentParams<f64>, mb: &MiniBatch<f64>, cfg: &PpoConfig) -> f64 {
    let mut tape = Tape::new();
    ppo_loss(&mut tape, p, mb, cfg).unwrap().1.loss
}

fn ppo_rel_err<R: Real>(p: &AgentParams<R>, mb: &MiniBatch<R>, cfg: &PpoConfig, eps: f64) -> f64 {
    let grads = {
        let mut tape = Tape::new();
        let (loss, _) = ppo_loss(&mut tape, p, mb, cfg).unwrap();
        tape.backward(loss).unwrap()
    };
    let base = p.cast::<f64>();
    let mb64 = mb.cast::<f64>();
    let mut worst: f64 = 0.0;
    for (i, t) in base.tensors().iter().enumerate() {
        let g = grads.get(i);
        for j in 0..t.len() {
            let mut plus = base.clone();
            plus.tensors_mut()[i].data_mut()[j] += eps;
            let mut minus = base.clone();
            minus.tensors_mut()[i].data_mut()[j] -= eps;
            let num = (ppo_loss_value(&plus, &mb64, cfg) - ppo_loss_value(&minus, &mb64, cfg)) / (2.0 * eps);
            let ana = g.map_or(0.0, |g| g[j].as_f64());
            worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-2));
        }
    }
    worst
}

/// Worst f64 and f32 relative errors of the full agent forward pass plus PPO
/// loss over `configs` rollouts, with parameters jittered off the behaviour
/// policy so ratios and value clips vary.
pub fn ppo_loss_sweep(configs: u64) -> (f64, f64) {
    let cfg = PpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9907);
    let (mut w64, mut w32): (f64, f64) = (0.0, 0.0);
    for k in 0..configs {
        let (p, mb) = rollout_batch(k);
        let mut p64 = p.cast::<f64>();
        for t in p64.tensors_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.08..0.08);
            }
        }
        w64 = w64.max(ppo_rel_err(&p64, &mb.cast::<f64>(), &cfg, 1e-6));
        w32 = w32.max(ppo_rel_err(&p64.cast::<f32>(), &mb, &cfg, 1e-6));
    }
    (w64, w32)
}
