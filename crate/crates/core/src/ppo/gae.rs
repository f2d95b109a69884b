use crate::error::{Error, Result};

/// Generalized advantage estimates and value targets for one sequence.
///
/// `dones[t]` marks that the episode ended on transition `t`; the value after
/// the final transition is `bootstrap` unless that transition was terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::shape("compute_gae", &[n], &[values.len(), dones.len()]));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for x in xs {
        *x = (*x - mean) / std;
    }
}
