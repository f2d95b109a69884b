//! The clipped-surrogate update applied to one agent's rollout buffer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gae::normalize;
use super::rollout::{RolloutBuffer, Sequence};
use super::PpoConfig;
use crate::agent::{encode, heads, AgentParams, ObsBatch};
use crate::error::{Error, Result};
use crate::tensor::{adam_step, clip_global_norm, lstm_cell, AdamConfig, AdamState, Real, Tape, Var};

/// Whole sequences laid out time-major: row `t·S + s` is step `t` of sequence `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch<R> {
    pub steps: usize,
    pub seqs: usize,
    pub obs: ObsBatch<R>,
    pub h0: Vec<R>,
    pub c0: Vec<R>,
    /// `keep[t][s]` is 0 when sequence `s` ended an episode at step `t`.
    pub keep: Vec<Vec<R>>,
    pub actions: Vec<usize>,
    pub tokens: Vec<usize>,
    pub old_logp_a: Vec<R>,
    pub old_logp_m: Vec<R>,
    pub old_values: Vec<R>,
    pub advantages: Vec<R>,
    pub returns: Vec<R>,
}

impl MiniBatch<f32> {
    /// `advantages[i]` replaces `seqs[i].advantages` (e.g. after normalization).
    pub fn build(seqs: &[&Sequence], advantages: &[&[f32]]) -> Result<Self> {
        let s_n = seqs.len();
        let t_n = seqs.first().map_or(0, |s| s.len());
        if seqs.iter().any(|s| s.len() != t_n) || advantages.len() != s_n {
            return Err(Error::Usage("minibatch sequences must share one length".into()));
        }
        let mut mb = MiniBatch {
            steps: t_n,
            seqs: s_n,
            obs: ObsBatch {
                n: 0,
                grid: Vec::new(),
                pos: Vec::new(),
                msg: Vec::new(),
            },
            h0: seqs.iter().flat_map(|s| s.entry.h.iter().copied()).collect(),
            c0: seqs.iter().flat_map(|s| s.entry.c.iter().copied()).collect(),
            keep: Vec::with_capacity(t_n),
            actions: Vec::with_capacity(t_n * s_n),
            tokens: Vec::with_capacity(t_n * s_n),
            old_logp_a: Vec::with_capacity(t_n * s_n),
            old_logp_m: Vec::with_capacity(t_n * s_n),
            old_values: Vec::with_capacity(t_n * s_n),
            advantages: Vec::with_capacity(t_n * s_n),
            returns: Vec::with_capacity(t_n * s_n),
        };
        for t in 0..t_n {
            let mut keep = Vec::with_capacity(s_n);
            for (i, s) in seqs.iter().enumerate() {
                let tr = &s.steps[t];
                mb.obs.push(&tr.obs);
                mb.actions.push(tr.action);
                mb.tokens.push(tr.token);
                mb.old_logp_a.push(tr.logp_a);
                mb.old_logp_m.push(tr.logp_m);
                mb.old_values.push(tr.value);
                mb.advantages.push(advantages[i][t]);
                mb.returns.push(s.returns[t]);
                keep.push(if tr.done { 0.0 } else { 1.0 });
            }
            mb.keep.push(keep);
        }
        Ok(mb)
    }
}

impl<R: Real> MiniBatch<R> {
    pub fn cast<S: Real>(&self) -> MiniBatch<S> {
        let c = |v: &[R]| v.iter().map(|x| S::from_f64(x.as_f64())).collect::<Vec<S>>();
        MiniBatch {
            steps: self.steps,
            seqs: self.seqs,
            obs: ObsBatch {
                n: self.obs.n,
                grid: c(&self.obs.grid),
                pos: c(&self.obs.pos),
                msg: self.obs.msg.clone(),
            },
            h0: c(&self.h0),
            c0: c(&self.c0),
            keep: self.keep.iter().map(|k| c(k)).collect(),
            actions: self.actions.clone(),
            tokens: self.tokens.clone(),
            old_logp_a: c(&self.old_logp_a),
            old_logp_m: c(&self.old_logp_m),
            old_values: c(&self.old_values),
            advantages: c(&self.advantages),
            returns: c(&self.returns),
        }
    }

    pub fn rows(&self) -> usize {
        self.steps * self.seqs
    }
}

/// Scalar diagnostics of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub surrogate_action: f64,
    pub surrogate_message: f64,
    pub value_loss: f64,
    pub action_entropy: f64,
    pub message_entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

struct Surrogate {
    objective: Var,
    entropy: Var,
    ratio: Var,
}

fn clipped_surrogate<R: Real>(
    tape: &mut Tape<'_, R>,
    logits: Var,
    chosen: &[usize],
    old_logp: &[R],
    adv: Var,
    clip: f64,
) -> Result<Surrogate> {
    let n = chosen.len();
    let logp_all = tape.log_softmax(logits);
    let logp = tape.gather(logp_all, chosen)?;
    let old = tape.constant(n, 1, old_logp.to_vec())?;
    let diff = tape.sub(logp, old)?;
    let ratio = tape.exp(diff);
    let unclipped = tape.mul(ratio, adv)?;
    let clipped_ratio = tape.clamp(ratio, R::from_f64(1.0 - clip), R::from_f64(1.0 + clip));
    let clipped = tape.mul(clipped_ratio, adv)?;
    let pessimistic = tape.minimum(unclipped, clipped)?;
    let objective = tape.mean(pessimistic);

    let probs = tape.softmax(logits);
    let plogp = tape.mul(probs, logp_all)?;
    let row_sum = tape.sum_cols(plogp);
    let neg_ent = tape.mean(row_sum);
    let entropy = tape.scale(neg_ent, -R::one());
    Ok(Surrogate {
        objective,
        entropy,
        ratio,
    })
}

/// Records the full objective on `tape` and returns the scalar loss.
///
/// `loss = −(J_a + J_m) + vf·L_v − (c_a·H_a + c_m·H_m)` with both surrogates
/// sharing one advantage.
pub fn ppo_loss<'a, R: Real>(
    tape: &mut Tape<'a, R>,
    params: &'a AgentParams<R>,
    mb: &MiniBatch<R>,
    cfg: &PpoConfig,
) -> Result<(Var, LossReport)> {
    let spec = params.spec();
    let (t_n, s_n, hd) = (mb.steps, mb.seqs, spec.hidden);
    let rows = mb.rows();
    let bound = params.bind(tape);
    let x = encode(tape, &bound, spec, &mb.obs)?;
    let mut h = tape.constant(s_n, hd, mb.h0.clone())?;
    let mut c = tape.constant(s_n, hd, mb.c0.clone())?;
    let mut hs = Vec::with_capacity(t_n);
    for t in 0..t_n {
        let xt = tape.slice_rows(x, t * s_n, s_n)?;
        (h, c) = lstm_cell(tape, bound.lstm(), xt, h, c)?;
        hs.push(h);
        if t + 1 < t_n && mb.keep[t].iter().any(|&k| k == R::zero()) {
            h = tape.row_scale(h, &mb.keep[t])?;
            c = tape.row_scale(c, &mb.keep[t])?;
        }
    }
    let hall = tape.concat_rows(&hs)?;
    let out = heads(tape, &bound, hall)?;

    let adv = tape.constant(rows, 1, mb.advantages.clone())?;
    let sa = clipped_surrogate(tape, out.action_logits, &mb.actions, &mb.old_logp_a, adv, cfg.clip)?;
    let sm = clipped_surrogate(tape, out.msg_logits, &mb.tokens, &mb.old_logp_m, adv, cfg.clip)?;

    let ret = tape.constant(rows, 1, mb.returns.clone())?;
    let err = tape.sub(out.value, ret)?;
    let sq = tape.square(err);
    let per_row = if cfg.clip_value_loss {
        let old = tape.constant(rows, 1, mb.old_values.clone())?;
        let delta = tape.sub(out.value, old)?;
        let r = R::from_f64(cfg.clip);
        let delta = tape.clamp(delta, -r, r);
        let v_clip = tape.add(old, delta)?;
        let err_clip = tape.sub(v_clip, ret)?;
        let sq_clip = tape.square(err_clip);
        tape.maximum(sq, sq_clip)?
    } else {
        sq
    };
    let v_mean = tape.mean(per_row);
    let value_loss = tape.scale(v_mean, R::from_f64(0.5));

    let j = tape.add(sa.objective, sm.objective)?;
    let neg_j = tape.scale(j, -R::one());
    let v_term = tape.scale(value_loss, R::from_f64(cfg.vf_coef));
    let ea = tape.scale(sa.entropy, R::from_f64(-cfg.ent_coef_action));
    let em = tape.scale(sm.entropy, R::from_f64(-cfg.ent_coef_message));
    let l1 = tape.add(neg_j, v_term)?;
    let l2 = tape.add(l1, ea)?;
    let loss = tape.add(l2, em)?;

    let mut kl = 0.0;
    let mut clipped = 0usize;
    for ratio in [sa.ratio, sm.ratio] {
        for &r in tape.value(ratio) {
            let r = r.as_f64();
            kl += (r - 1.0) - r.ln();
            clipped += usize::from((r - 1.0).abs() > cfg.clip);
        }
    }
    let report = LossReport {
        loss: tape.scalar(loss).as_f64(),
        surrogate_action: tape.scalar(sa.objective).as_f64(),
        surrogate_message: tape.scalar(sm.objective).as_f64(),
        value_loss: tape.scalar(value_loss).as_f64(),
        action_entropy: tape.scalar(sa.entropy).as_f64(),
        message_entropy: tape.scalar(sm.entropy).as_f64(),
        approx_kl: kl / (2 * rows) as f64,
        clip_frac: clipped as f64 / (2 * rows) as f64,
    };
    if !report.loss.is_finite() {
        return Err(Error::Numeric(diagnose(tape, out.action_logits, out.msg_logits, mb, &report)));
    }
    Ok((loss, report))
}

fn diagnose<R: Real>(tape: &Tape<'_, R>, al: Var, ml: Var, mb: &MiniBatch<R>, rep: &LossReport) -> String {
    let range = |v: &[R]| {
        let it = v.iter().map(|x| x.as_f64());
        let lo = it.clone().fold(f64::INFINITY, f64::min);
        let hi = it.clone().fold(f64::NEG_INFINITY, f64::max);
        let nan = v.iter().filter(|x| x.is_nan()).count();
        format!("[{lo:.4e}, {hi:.4e}] ({nan} NaN)")
    };
    let adv: Vec<f64> = mb.advantages.iter().map(|x| x.as_f64()).collect();
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    format!(
        "non-finite PPO loss {:?}: action logits {}, message logits {}, advantages mean {mean:.4e} std {std:.4e}, value loss {:?}",
        rep.loss,
        range(tape.value(al)),
        range(tape.value(ml)),
        rep.value_loss
    )
}

/// Averages over every minibatch step of one update call.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub loss: f64,
    pub value_loss: f64,
    pub action_entropy: f64,
    pub message_entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub updates: usize,
}

/// Epochs of sequence-preserving minibatch updates over one agent's buffer.
pub fn ppo_update<G: Rng + ?Sized>(
    params: &mut AgentParams<f32>,
    adam: &mut AdamState<f32>,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut G,
) -> Result<TrainStats> {
    let seqs = &buffer.sequences;
    let mut stats = TrainStats {
        lr,
        ..Default::default()
    };
    if seqs.is_empty() {
        return Ok(stats);
    }
    let mut flat: Vec<f64> = seqs.iter().flat_map(|s| s.advantages.iter().map(|&a| a as f64)).collect();
    if cfg.normalize_adv {
        normalize(&mut flat);
    }
    let adv: Vec<Vec<f32>> = flat
        .chunks(seqs[0].len())
        .map(|c| c.iter().map(|&a| a as f32).collect())
        .collect();

    let groups = cfg.minibatches.min(seqs.len());
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for g in 0..groups {
            let idx = &order[g * order.len() / groups..(g + 1) * order.len() / groups];
            let batch: Vec<&Sequence> = idx.iter().map(|&i| &seqs[i]).collect();
            let batch_adv: Vec<&[f32]> = idx.iter().map(|&i| adv[i].as_slice()).collect();
            let mb = MiniBatch::build(&batch, &batch_adv)?;

            params.zero_grad();
            let (grads, report) = {
                let mut tape = Tape::new();
                let (loss, report) = ppo_loss(&mut tape, params, &mb, cfg)?;
                (tape.backward(loss)?, report)
            };
            grads.accumulate_into(params.tensors_mut())?;
            let norm = crate::tensor::grad_norm(params.tensors());
            if !norm.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient norm for agent {} (loss {:.4e})",
                    buffer.agent, report.loss
                )));
            }
            clip_global_norm(params.tensors_mut(), cfg.max_grad_norm);
            adam_step(params.tensors_mut(), adam, AdamConfig::with_lr(lr))?;

            stats.loss += report.loss;
            stats.value_loss += report.value_loss;
            stats.action_entropy += report.action_entropy;
            stats.message_entropy += report.message_entropy;
            stats.approx_kl += report.approx_kl;
            stats.clip_frac += report.clip_frac;
            stats.grad_norm += norm;
            stats.updates += 1;
        }
    }
    let k = stats.updates as f64;
    for v in [
        &mut stats.loss,
        &mut stats.value_loss,
        &mut stats.action_entropy,
        &mut stats.message_entropy,
        &mut stats.approx_kl,
        &mut stats.clip_frac,
        &mut stats.grad_norm,
    ] {
        *v /= k;
    }
    params.zero_grad();
    Ok(stats)
}
