use rand::Rng;

use crate::error::{Error, Result};

/// Categorical distribution parameterised by logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits<R: super::Real>(logits: &[R]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Numeric("categorical over zero outcomes".into()));
        }
        let mut lp: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
        if lp.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("NaN logits {lp:?}")));
        }
        super::tape::log_softmax_in_place(&mut lp);
        if lp.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
        }
        Ok(Categorical { log_probs: lp })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }

    pub fn log_prob(&self, k: usize) -> f64 {
        self.log_probs[k]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .filter(|v| v.is_finite())
            .map(|&lp| lp.exp() * lp)
            .sum::<f64>()
    }

    /// Inverse-CDF sampling from a single uniform draw.
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, lp) in self.log_probs.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                return k;
            }
        }
        // u landed in the rounding slack above the last partial sum
        self.log_probs
            .iter()
            .rposition(|lp| lp.is_finite())
            .unwrap_or(self.log_probs.len() - 1)
    }

    /// Index of the most probable outcome (lowest index on ties).
    pub fn mode(&self) -> usize {
        argmax(&self.log_probs)
    }
}

pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_entropy_is_ln4() {
        let d = Categorical::from_logits(&[0.0f32; 4]).unwrap();
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn peaked_logits_almost_always_sample_zero() {
        // p0 = e^10 / (e^10 + 3) = 0.999864
        let d = Categorical::from_logits(&[10.0f64, 0.0, 0.0, 0.0]).unwrap();
        let exact = 10f64.exp() / (10f64.exp() + 3.0);
        assert!((d.probs()[0] - exact).abs() < 1e-12);
        assert!(d.probs()[0] > 0.99986);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeros = (0..100_000).filter(|_| d.sample(&mut rng) == 0).count();
        assert!(zeros as f64 / 1e5 > 0.999);
    }

    #[test]
    fn empirical_frequencies_match() {
        let probs = [0.1f64, 0.2, 0.3, 0.4];
        let logits: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let d = Categorical::from_logits(&logits).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 4];
        let n = 1_000_000;
        for _ in 0..n {
            counts[d.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.005);
        }
    }

    #[test]
    fn nan_logits_are_rejected() {
        assert!(matches!(
            Categorical::from_logits(&[0.0f32, f32::NAN]),
            Err(Error::Numeric(_))
        ));
    }
}
