use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2.5e-4,
            eps: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<R> {
    pub step: u64,
    pub m: Vec<Vec<R>>,
    pub v: Vec<Vec<R>>,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &[Tensor<R>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![R::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![R::zero(); p.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update using each tensor's gradient accumulator.
/// Tensors without a gradient are left untouched.
pub fn adam_step<R: Real>(
    params: &mut [Tensor<R>],
    state: &mut AdamState<R>,
    cfg: AdamConfig,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::shape("adam_step", &[params.len()], &[state.m.len()]));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let step_size = R::from_f64(cfg.lr / bc1);
    let (b1, b2) = (R::from_f64(cfg.beta1), R::from_f64(cfg.beta2));
    let (one, eps) = (R::one(), R::from_f64(cfg.eps));
    let inv_sqrt_bc2 = R::from_f64(1.0 / bc2.sqrt());

    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let Some(g) = p.grad().map(|g| g.to_vec()) else { continue };
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            m[k] = b1 * m[k] + (one - b1) * g[k];
            v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
            let denom = v[k].sqrt() * inv_sqrt_bc2 + eps;
            *w -= step_size * m[k] / denom;
        }
    }
    Ok(())
}

/// Global L2 norm over every gradient accumulator.
pub fn grad_norm<R: Real>(params: &[Tensor<R>]) -> f64 {
    params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `min(1, max_norm / ‖g‖₂)` and returns that factor.
pub fn clip_global_norm<R: Real>(params: &mut [Tensor<R>], max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    let scale = if norm > max_norm { max_norm / (norm + 1e-6) } else { 1.0 };
    if scale < 1.0 {
        let s = R::from_f64(scale);
        for p in params.iter_mut() {
            if let Some(g) = p.grad_mut() {
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    scale
}
