//! Biased demand process: a price treatment driven by `k` Gaussian
//! instruments, a nonlinear seasonal effect in a time covariate, seven
//! customer types, and a sinusoidal direct effect of the invalid instruments
//! on sales.
//!
//! Price and sales are standardized as `(v - mean) / std` with the fixed
//! constants in [`Standardization`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{normal, TruthOracle};
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const CUSTOMER_TYPES: usize = 7;

/// Seasonal price sensitivity.
pub fn psi(t: f64) -> f64 {
    let c = t - 5.0;
    2.0 * (c.powi(4) / 600.0 + (-4.0 * c * c).exp() + t / 10.0 - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub p_mean: f64,
    pub p_std: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Default for Standardization {
    fn default() -> Self {
        Self {
            p_mean: 17.779,
            p_std: 3.7,
            y_mean: -292.1,
            y_std: 158.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandConfig {
    pub k: usize,
    /// Zero-based indices of instruments without a direct effect.
    pub valid_indices: Vec<usize>,
    pub gamma: f64,
    pub rho: f64,
    pub n: usize,
    pub param_seed: u64,
    pub noise_seed: u64,
    pub standardization: Standardization,
    /// Force the price shock and sales noise to zero.
    pub zero_noise: bool,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            k: 8,
            valid_indices: (0..8).collect(),
            gamma: 0.0,
            rho: 0.5,
            n: 10_000,
            param_seed: 0,
            noise_seed: 0,
            standardization: Standardization::default(),
            zero_noise: false,
        }
    }
}

impl DemandConfig {
    /// `k` instruments of which the last `n_invalid` carry a direct effect.
    pub fn with_invalid(k: usize, n_invalid: usize, gamma: f64, n: usize, seed: u64) -> Self {
        Self {
            k,
            valid_indices: (0..k.saturating_sub(n_invalid)).collect(),
            gamma,
            n,
            param_seed: seed,
            noise_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::Config("demand: k and n must be positive".into()));
        }
        if self.valid_indices.is_empty() {
            return Err(Error::Config("demand: at least one valid instrument required".into()));
        }
        let mut seen = vec![false; self.k];
        for &i in &self.valid_indices {
            if i >= self.k || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("demand: bad or repeated valid index {i} for k={}", self.k)));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("demand: gamma must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("demand: rho must lie in [0, 1], got {}", self.rho)));
        }
        let s = &self.standardization;
        if !(s.p_std > 0.0 && s.y_std > 0.0) {
            return Err(Error::Config("demand: standardization scales must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTruth {
    pub beta_x: Vec<f64>,
    pub beta_zp: Vec<f64>,
    pub beta_zy: Vec<f64>,
    pub gamma: f64,
    pub valid: Vec<usize>,
    pub standardization: Standardization,
}

impl DemandTruth {
    /// Covariates are `[time, one-hot customer type (7)]`.
    fn type_weight(&self, x: &[f64]) -> f64 {
        x[1..].iter().zip(&self.beta_x).map(|(a, b)| a * b).sum()
    }

    pub fn structural(&self, p: f64, x: &[f64]) -> f64 {
        let s = &self.standardization;
        let w = self.type_weight(x) * psi(x[0]);
        let price = s.p_mean + s.p_std * p;
        let sales = 100.0 + 10.0 * w + (w - 2.0) * price;
        (sales - s.y_mean) / s.y_std
    }

    pub fn slope(&self, x: &[f64]) -> f64 {
        let s = &self.standardization;
        (self.type_weight(x) * psi(x[0]) - 2.0) * s.p_std / s.y_std
    }

    pub fn direct_effect(&self, z: &[f64]) -> f64 {
        let index: f64 = z.iter().zip(&self.beta_zy).map(|(a, b)| a * b).sum();
        self.gamma * 60.0 * index.sin() / self.standardization.y_std
    }
}

/// Dataset columns: `t` = standardized price, `x = [time, type one-hot]`,
/// `z = z_1..z_k`.
pub fn generate_demand(config: &DemandConfig) -> Result<(Dataset, TruthOracle)> {
    config.validate()?;
    let k = config.k;
    let mut params = ChaCha20Rng::seed_from_u64(config.param_seed);
    let beta_zp: Vec<f64> = (0..k).map(|_| params.random_range(0.5..1.5)).collect();
    let mut beta_zy: Vec<f64> = (0..k).map(|_| params.random_range(0.5..1.5)).collect();
    for &i in &config.valid_indices {
        beta_zy[i] = 0.0;
    }
    let mut valid = config.valid_indices.clone();
    valid.sort_unstable();
    let truth = DemandTruth {
        beta_x: (1..=CUSTOMER_TYPES).map(|v| v as f64).collect(),
        beta_zp,
        beta_zy,
        gamma: config.gamma,
        valid,
        standardization: config.standardization,
    };

    let s = config.standardization;
    let d = 1 + CUSTOMER_TYPES;
    let n = config.n;
    let mut noise = ChaCha20Rng::seed_from_u64(config.noise_seed);
    let (mut y, mut t) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut x = Vec::with_capacity(n * d);
    let mut z = Vec::with_capacity(n * k);
    let mut x_row = vec![0.0; d];
    let mut z_row = vec![0.0; k];
    let rho = config.rho;
    for _ in 0..n {
        for v in z_row.iter_mut() {
            *v = normal(&mut noise);
        }
        let mut nu = normal(&mut noise);
        let time = noise.random_range(0.0..10.0);
        let kind = noise.random_range(0..CUSTOMER_TYPES);
        let mut e = rho * nu + (1.0 - rho * rho).sqrt() * normal(&mut noise);
        if config.zero_noise {
            nu = 0.0;
            e = 0.0;
        }

        let instrument: f64 = z_row.iter().zip(&truth.beta_zp).map(|(a, b)| a * b).sum();
        let price = 25.0 + (instrument + 3.0) * psi(time) + nu;
        let p = (price - s.p_mean) / s.p_std;

        x_row.fill(0.0);
        x_row[0] = time;
        x_row[1 + kind] = 1.0;
        y.push(truth.structural(p, &x_row) + truth.direct_effect(&z_row) + e / s.y_std);
        t.push(p);
        x.extend_from_slice(&x_row);
        z.extend_from_slice(&z_row);
    }

    let x_names = std::iter::once("time".to_string())
        .chain((1..=CUSTOMER_TYPES).map(|i| format!("type_{i}")))
        .collect();
    let z_names = (1..=k).map(|i| format!("z_{i}")).collect();
    let data = Dataset::with_names(y, t, x, z, x_names, z_names)?;
    Ok((data, TruthOracle::Demand(truth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{covariance, variance};

    #[test]
    fn psi_reference_values() {
        assert_eq!(psi(5.0), -1.0);
        // 2 * (625/600 + e^-100 + 0 - 2)
        let at0 = 2.0 * (625.0 / 600.0 + (-100.0f64).exp() - 2.0);
        assert!((psi(0.0) - at0).abs() < 1e-15);
        assert!((psi(0.0) + 1.916_666_666_7).abs() < 1e-9);
        assert!((psi(10.0) - 0.083_333_333_3).abs() < 1e-9);
    }

    #[test]
    fn all_valid_means_no_direct_effect() {
        let cfg = DemandConfig {
            gamma: 3.0,
            n: 200,
            ..DemandConfig::default()
        };
        let (data, truth) = generate_demand(&cfg).unwrap();
        for i in 0..data.n() {
            assert_eq!(truth.direct_effect(data.z_row(i)), 0.0);
        }
    }

    #[test]
    fn gamma_zero_matches_all_valid() {
        let base = DemandConfig::with_invalid(8, 3, 0.0, 300, 5);
        let all_valid = DemandConfig {
            valid_indices: (0..8).collect(),
            ..base.clone()
        };
        assert_eq!(generate_demand(&base).unwrap().0, generate_demand(&all_valid).unwrap().0);
    }

    #[test]
    fn noise_stream_independent_of_gamma() {
        let a = generate_demand(&DemandConfig::with_invalid(8, 3, 0.0, 500, 9)).unwrap().0;
        let b = generate_demand(&DemandConfig::with_invalid(8, 3, 2.0, 500, 9)).unwrap().0;
        assert_eq!(a.t(), b.t());
        for i in 0..a.n() {
            assert_eq!(a.x_row(i), b.x_row(i));
            assert_eq!(a.z_row(i), b.z_row(i));
        }
        assert_ne!(a.y(), b.y());
    }

    #[test]
    fn zero_noise_reproduces_truth_exactly() {
        let cfg = DemandConfig {
            zero_noise: true,
            ..DemandConfig::with_invalid(6, 2, 1.0, 400, 2)
        };
        let (data, truth) = generate_demand(&cfg).unwrap();
        for i in 0..data.n() {
            assert_eq!(data.y()[i], truth.noiseless(data.t()[i], data.x_row(i), data.z_row(i)));
        }
        let cfg = DemandConfig {
            gamma: 0.0,
            ..cfg
        };
        let (data, truth) = generate_demand(&cfg).unwrap();
        for i in 0..data.n() {
            assert_eq!(data.y()[i], truth.response(data.t()[i], data.x_row(i)));
        }
    }

    #[test]
    fn confounding_correlation_matches_rho() {
        // Recover e and nu from a large draw through the structural equations.
        let cfg = DemandConfig {
            n: 100_000,
            rho: 0.7,
            ..DemandConfig::default()
        };
        let (data, truth) = generate_demand(&cfg).unwrap();
        let TruthOracle::Demand(dt) = &truth else { unreachable!() };
        let s = dt.standardization;
        let mut e = Vec::new();
        let mut nu = Vec::new();
        for i in 0..data.n() {
            let x = data.x_row(i);
            e.push((data.y()[i] - truth.noiseless(data.t()[i], x, data.z_row(i))) * s.y_std);
            let inst: f64 = data.z_row(i).iter().zip(&dt.beta_zp).map(|(a, b)| a * b).sum();
            nu.push(s.p_mean + s.p_std * data.t()[i] - 25.0 - (inst + 3.0) * psi(x[0]));
        }
        let corr = covariance(&e, &nu) / (variance(&e) * variance(&nu)).sqrt();
        assert!((corr - 0.7).abs() < 0.02, "corr {corr}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = DemandConfig::default();
        cfg.valid_indices = vec![];
        assert!(cfg.validate().is_err());
        cfg.valid_indices = vec![8];
        assert!(cfg.validate().is_err());
        cfg.valid_indices = vec![1, 1];
        assert!(cfg.validate().is_err());
        cfg.valid_indices = vec![1];
        cfg.rho = 1.5;
        assert!(cfg.validate().is_err());
    }
}
