//! Monte Carlo harness for the consistency and asymptotic normality of the
//! modal estimator, using synthetic per-instrument estimates
//! `β̂_j = β_j + σ_j · N(0, 1) / √n`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::{aggregate, AggregationConfig};
use crate::sim::normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEstimatorSpec {
    /// Probability limit of each estimator.
    pub limits: Vec<f64>,
    pub sds: Vec<f64>,
    pub n: f64,
    pub seed: u64,
}

impl SyntheticEstimatorSpec {
    /// `n_valid` estimators converging to `beta` followed by the given
    /// invalid limits, all with unit standard deviation.
    pub fn with_invalid(beta: f64, n_valid: usize, invalid: &[f64], n: f64, seed: u64) -> Self {
        let limits: Vec<f64> = std::iter::repeat_n(beta, n_valid).chain(invalid.iter().copied()).collect();
        Self {
            sds: vec![1.0; limits.len()],
            limits,
            n,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.limits.len()
    }

    /// Size of the largest group of equal limits.
    pub fn modal_count(&self) -> usize {
        self.limits
            .iter()
            .map(|a| self.limits.iter().filter(|b| *b == a).count())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() < 2 {
            return Err(Error::Config("need at least two synthetic estimators".into()));
        }
        if self.sds.len() != self.k() {
            return Err(Error::Dimension(format!("{} sds for {} limits", self.sds.len(), self.k())));
        }
        if self.limits.iter().any(|v| !v.is_finite()) || self.sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("limits must be finite and sds non-negative".into()));
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            return Err(Error::Config(format!("n must be positive, got {}", self.n)));
        }
        Ok(())
    }
}

/// One modal estimate per replicate.
pub fn simulate_theorem(spec: &SyntheticEstimatorSpec, config: &AggregationConfig, replicates: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    config.validate(spec.k())?;
    let v = config.resolve_v(spec.k());
    if v > spec.modal_count() {
        return Err(Error::Config(format!(
            "V={v} exceeds the {} estimators sharing the modal limit",
            spec.modal_count()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let scale = spec.n.sqrt();
    let mut draws = vec![0.0; spec.k()];
    (0..replicates)
        .map(|_| {
            for ((d, b), s) in draws.iter_mut().zip(&spec.limits).zip(&spec.sds) {
                *d = b + s * normal(&mut rng) / scale;
            }
            aggregate(&draws, config)
        })
        .collect()
}

/// Sample skewness and excess kurtosis.
pub fn shape_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let moment = |p: i32| values.iter().map(|v| (v - m).powi(p)).sum::<f64>() / n;
    let m2 = moment(2);
    (moment(3) / m2.powf(1.5), moment(4) / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mean, variance};

    fn setup(n: f64, seed: u64) -> SyntheticEstimatorSpec {
        SyntheticEstimatorSpec::with_invalid(1.0, 5, &[2.0, 3.0, 4.0, 5.0], n, seed)
    }

    #[test]
    fn zero_noise_gives_exact_beta() {
        let mut spec = setup(100.0, 1);
        spec.sds = vec![0.0; 9];
        let est = simulate_theorem(&spec, &AggregationConfig::with_v(5), 10).unwrap();
        assert!(est.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn converges_at_root_n_rate() {
        let cfg = AggregationConfig::with_v(5);
        let a = simulate_theorem(&setup(1e4, 2), &cfg, 2000).unwrap();
        let b = simulate_theorem(&setup(4e4, 3), &cfg, 2000).unwrap();
        assert!((mean(&b) - 1.0).abs() < 0.01);
        let ratio = variance(&b) / variance(&a);
        assert!((0.15..=0.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn premise_enforced() {
        assert!(simulate_theorem(&setup(1e4, 1), &AggregationConfig::with_v(6), 1).is_err());
        let mut spec = setup(1e4, 1);
        spec.sds.pop();
        assert!(simulate_theorem(&spec, &AggregationConfig::with_v(5), 1).is_err());
    }

    #[test]
    fn shape_of_gaussian_sample() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..20000).map(|_| normal(&mut rng)).collect();
        let (s, k) = shape_moments(&v);
        assert!(s.abs() < 0.05 && k.abs() < 0.1, "{s} {k}");
        let (s, _) = shape_moments(&[0.0, 0.0, 0.0, 10.0]);
        assert!(s > 1.0);
    }
}
