use rand::Rng;
use rand_distr::StandardNormal;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Orthogonal initializer scaled by `gain`.
///
/// For `rows <= cols` the rows are orthonormal (`W Wᵀ = gain² I`), otherwise
/// the columns are (`Wᵀ W = gain² I`).
pub fn orthogonal_init<R: Real, G: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    gain: f64,
    rng: &mut G,
) -> Result<Tensor<R>> {
    if gain <= 0.0 || !gain.is_finite() {
        return Err(Error::Config(format!("orthogonal gain must be positive, got {gain}")));
    }
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // Columns of a tall Gaussian matrix, orthonormalised in place.
    let mut q: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..tall).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..short {
        // Two passes of modified Gram-Schmidt keep the residual at machine precision.
        for _ in 0..2 {
            for i in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let dot: f64 = done[i].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                rest[0].iter_mut().zip(&done[i]).for_each(|(v, u)| *v -= dot * u);
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Numeric("degenerate Gaussian draw in orthogonal_init".into()));
        }
        q[j].iter_mut().for_each(|v| *v /= norm);
    }

    let mut data = vec![R::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if rows <= cols { q[r][c] } else { q[c][r] };
            data[r * cols + c] = R::from_f64(gain * v);
        }
    }
    Tensor::new(vec![rows, cols], data)
}
