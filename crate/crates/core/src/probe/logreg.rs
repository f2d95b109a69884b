//! One-vs-rest L2-regularized logistic regression, fitted by full-batch
//! accelerated gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub max_iters: usize,
    /// Stop once every classifier's gradient norm is below this.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            max_iters: 5000,
            tol: 1e-5,
        }
    }
}

/// Per-class weights (row-major `classes × dim`) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub dim: usize,
    pub classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
}

impl LrModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let w = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Class with the highest predicted probability.
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::tensor::argmax(&self.scores(x))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `c (m×n) = a (m×k) · b (k×n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, c: &mut [f64]) {
    // SAFETY: callers pass slices sized for the given dims and strides.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Largest eigenvalue of `XᵀX / n` (bias column included) by power iteration.
fn curvature(x: &[f64], n: usize, d: usize) -> f64 {
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lam = 1.0;
    for _ in 0..50 {
        let xv: Vec<f64> = (0..n)
            .map(|i| v[d] + x[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let mut w = vec![0.0; d + 1];
        for i in 0..n {
            for (wj, xj) in w.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                *wj += xj * xv[i];
            }
            w[d] += xv[i];
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt() / n as f64;
        if norm == 0.0 {
            return 1.0;
        }
        lam = norm;
        v = w.iter().map(|a| a / (norm * n as f64)).collect();
    }
    lam
}

/// Fits one binary classifier per class on `loss = mean log-loss +
/// ‖w‖² / (2n)`; biases are not penalized.
pub fn fit_ovr_logreg(x: &[&[f64]], y: &[usize], classes: usize, cfg: &LogRegConfig) -> Result<LrModel> {
    let n = x.len();
    if n != y.len() || n == 0 {
        return Err(Error::Undefined(format!("logistic regression on {n} rows and {} labels", y.len())));
    }
    let mut present = vec![false; classes];
    for &c in y {
        if c >= classes {
            return Err(Error::Usage(format!("label {c} out of range for {classes} classes")));
        }
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Undefined("logistic regression needs at least two classes".into()));
    }
    let d = x[0].len();
    let flat: Vec<f64> = x.iter().flat_map(|r| r.iter().copied()).collect();
    let reg = 1.0 / n as f64;
    let step = 1.0 / (0.25 * curvature(&flat, n, d) + reg);

    // Parameters as a (d+1) × classes matrix; the last row holds biases.
    let k = classes;
    let mut theta = vec![0.0; (d + 1) * k];
    let mut prev = theta.clone();
    let mut look = theta.clone();
    let mut z = vec![0.0; n * k];
    let mut grad = vec![0.0; (d + 1) * k];
    let mut resid = vec![0.0; n * k];
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        // z = X·W + b at the look-ahead point.
        gemm(n, d, k, &flat, d as isize, 1, &look, k as isize, 1, &mut z);
        for i in 0..n {
            for c in 0..k {
                let target = if y[i] == c { 1.0 } else { 0.0 };
                resid[i * k + c] = (sigmoid(z[i * k + c] + look[d * k + c]) - target) / n as f64;
            }
        }
        // grad_W = Xᵀ·resid + reg·W, grad_b = Σ resid.
        gemm(d, n, k, &flat, 1, d as isize, &resid, k as isize, 1, &mut grad[..d * k]);
        for c in 0..k {
            grad[d * k + c] = (0..n).map(|i| resid[i * k + c]).sum();
        }
        for (g, w) in grad[..d * k].iter_mut().zip(&look[..d * k]) {
            *g += reg * w;
        }
        let worst = (0..k)
            .map(|c| (0..=d).map(|j| grad[j * k + c].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if worst < cfg.tol {
            theta.copy_from_slice(&look);
            break;
        }
        let momentum = it as f64 / (it as f64 + 3.0);
        for j in 0..theta.len() {
            let next = look[j] - step * grad[j];
            look[j] = next + momentum * (next - prev[j]);
            prev[j] = next;
            theta[j] = next;
        }
    }
    let mut weights = vec![0.0; k * d];
    for c in 0..k {
        for j in 0..d {
            weights[c * d + j] = theta[j * k + c];
        }
    }
    let bias = (0..k).map(|c| theta[d * k + c]).collect();
    Ok(LrModel {
        dim: d,
        classes,
        weights,
        bias,
        iterations,
    })
}
