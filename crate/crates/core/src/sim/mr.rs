//! Mendelian-randomization style process: `K` bi-allelic SNP instruments,
//! a continuous exposure, and a heterogeneous effect `β(x)` that is a rounded
//! sparse linear index of ten uniform covariates. Invalid SNPs act directly
//! on the outcome (pleiotropy).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{normal, TruthOracle};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{covariance, variance};

pub const COVARIATES: usize = 10;
const ACTIVE_COVARIATES: usize = 3;
/// Variance share of the exposure explained by all instruments together.
const INSTRUMENT_SHARE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrConfig {
    /// Number of candidate instruments `K`.
    pub k: usize,
    /// The first `n_valid` instruments have no direct effect.
    pub n_valid: usize,
    pub rho: f64,
    pub n: usize,
    pub param_seed: u64,
    pub noise_seed: u64,
    /// Rows in the parameter-stream draw used to estimate the instrument
    /// score scales.
    pub pilot_size: usize,
    /// Force `u`, `ε_x`, `ε_y` to zero (skips variance normalization).
    pub zero_noise: bool,
}

impl Default for MrConfig {
    fn default() -> Self {
        Self {
            k: 20,
            n_valid: 10,
            rho: 0.5,
            n: 50_000,
            param_seed: 0,
            noise_seed: 0,
            pilot_size: 100_000,
            zero_noise: false,
        }
    }
}

impl MrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < 2 {
            return Err(Error::Config("mr: k must be positive and n >= 2".into()));
        }
        if self.n_valid == 0 || self.n_valid > self.k {
            return Err(Error::Config(format!(
                "mr: n_valid must lie in 1..={} (k), got {}",
                self.k, self.n_valid
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("mr: rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.pilot_size < 2 {
            return Err(Error::Config("mr: pilot_size must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrTruth {
    pub gamma_xt: Vec<f64>,
    pub allele_freq: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub valid: Vec<usize>,
    pub sigma_zx: f64,
    pub sigma_zy: f64,
    pub sigma_u: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl MrTruth {
    pub fn beta(&self, x: &[f64]) -> f64 {
        round_to_tenth(x.iter().zip(&self.gamma_xt).map(|(a, b)| a * b).sum())
    }

    pub fn structural(&self, t: f64, x: &[f64]) -> f64 {
        self.beta(x) * t
    }

    pub fn direct_effect(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.delta).map(|(a, b)| a * b).sum()
    }

    pub fn noiseless(&self, t: f64, x: &[f64], z: &[f64]) -> f64 {
        self.structural(t, x) + self.direct_effect(z)
    }

    /// `Σ δ_j E[z_j]` with `E[z_j] = 2 p_j`.
    pub fn mean_direct_effect(&self) -> f64 {
        self.delta.iter().zip(&self.allele_freq).map(|(d, p)| 2.0 * d * p).sum()
    }
}

/// Nearest multiple of 0.1, ties away from zero.
pub fn round_to_tenth(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// `β(x)` for a covariate vector of length 10.
pub fn beta_of_x(x: &[f64], truth: &MrTruth) -> Result<f64> {
    if x.len() != COVARIATES {
        return Err(Error::Dimension(format!("beta_of_x expects {COVARIATES} covariates, got {}", x.len())));
    }
    Ok(truth.beta(x))
}

fn binomial2(rng: &mut impl Rng, p: f64) -> f64 {
    let a = (rng.random::<f64>() < p) as u8;
    let b = (rng.random::<f64>() < p) as u8;
    (a + b) as f64
}

fn std_dev(v: &[f64]) -> f64 {
    variance(v).sqrt()
}

/// Smallest `s >= 0` with `Var(a + s·b) = 1` on the sample.
fn unit_variance_scale(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    let (va, vb, c) = (variance(a), variance(b), covariance(a, b));
    let disc = c * c - vb * (va - 1.0);
    if disc < 0.0 || vb <= 0.0 {
        return Err(Error::Config(format!("mr: cannot scale {what} to unit variance")));
    }
    let s = (-c + disc.sqrt()) / vb;
    if s < 0.0 {
        return Err(Error::Config(format!(
            "mr: {what} already has variance {va:.4} > 1 without noise"
        )));
    }
    Ok(s)
}

/// Dataset columns: `t` = exposure, `x = x_1..x_10`, `z = z_1..z_K`.
pub fn generate_mr(config: &MrConfig) -> Result<(Dataset, TruthOracle)> {
    config.validate()?;
    let k = config.k;
    let mut params = ChaCha20Rng::seed_from_u64(config.param_seed);
    let allele_freq: Vec<f64> = (0..k).map(|_| params.random_range(0.1..0.9)).collect();
    let nu_x: Vec<f64> = (0..k).map(|_| params.random_range(0.01..0.2)).collect();
    let nu_y: Vec<f64> = (0..k).map(|_| params.random_range(0.01..0.2)).collect();
    let mut gamma_xt = vec![0.0; COVARIATES];
    for i in sample(&mut params, COVARIATES, ACTIVE_COVARIATES).into_iter() {
        gamma_xt[i] = params.random_range(0.2..0.5);
    }

    // Instrument score scales from a pilot draw on the parameter stream.
    let mut score_x = Vec::with_capacity(config.pilot_size);
    let mut score_y = Vec::with_capacity(config.pilot_size);
    for _ in 0..config.pilot_size {
        let (mut sx, mut sy) = (0.0, 0.0);
        for j in 0..k {
            let g = binomial2(&mut params, allele_freq[j]);
            sx += nu_x[j] * g;
            sy += nu_y[j] * g;
        }
        score_x.push(sx);
        score_y.push(sy);
    }
    let sigma_zx = std_dev(&score_x);
    // the pleiotropy scale keeps the sqrt(0.1) factor inside the std dev
    let sigma_zy = INSTRUMENT_SHARE.sqrt() * std_dev(&score_y);
    let share = INSTRUMENT_SHARE.sqrt();
    let invalid_fraction = (k - config.n_valid) as f64 / k as f64;
    let alpha: Vec<f64> = nu_x.iter().map(|v| share * v / sigma_zx).collect();
    let delta: Vec<f64> = (0..k)
        .map(|j| {
            if j < config.n_valid {
                0.0
            } else {
                invalid_fraction * share * nu_y[j] / sigma_zy
            }
        })
        .collect();

    let n = config.n;
    let mut noise = ChaCha20Rng::seed_from_u64(config.noise_seed);
    let mut z = Vec::with_capacity(n * k);
    let mut x = Vec::with_capacity(n * COVARIATES);
    let (mut u0, mut ex0, mut ey0) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        for &p in &allele_freq {
            z.push(binomial2(&mut noise, p));
        }
        for _ in 0..COVARIATES {
            x.push(noise.random_range(-0.5..0.5));
        }
        u0.push(normal(&mut noise));
        ex0.push(normal(&mut noise));
        ey0.push(normal(&mut noise));
    }

    let mut truth = MrTruth {
        gamma_xt,
        allele_freq,
        alpha,
        delta,
        valid: (0..config.n_valid).collect(),
        sigma_zx,
        sigma_zy,
        sigma_u: 0.0,
        sigma_x: 0.0,
        sigma_y: 0.0,
    };
    let zr = |i: usize| &z[i * k..(i + 1) * k];
    let xr = |i: usize| &x[i * COVARIATES..(i + 1) * COVARIATES];
    let genetic: Vec<f64> = (0..n)
        .map(|i| zr(i).iter().zip(&truth.alpha).map(|(a, b)| a * b).sum())
        .collect();
    let direct: Vec<f64> = (0..n).map(|i| truth.direct_effect(zr(i))).collect();
    let beta: Vec<f64> = (0..n).map(|i| truth.beta(xr(i))).collect();

    let (t, y) = if config.zero_noise {
        let t = genetic.clone();
        let y = (0..n).map(|i| truth.noiseless(t[i], xr(i), zr(i))).collect();
        (t, y)
    } else {
        // Split the outcome variance left after the exposure and pleiotropic
        // paths evenly between the confounder and idiosyncratic noise, then
        // solve the exposure and outcome noise scales exactly on the sample.
        let rough_t: Vec<f64> = (0..n)
            .map(|i| genetic[i] + (1.0 - INSTRUMENT_SHARE).sqrt() * ex0[i])
            .collect();
        let explained: Vec<f64> = (0..n).map(|i| beta[i] * rough_t[i] + direct[i]).collect();
        let sigma_u = ((1.0 - variance(&explained)) / 2.0).max(0.0).sqrt();
        let u: Vec<f64> = u0.iter().map(|v| sigma_u * v).collect();

        let t_base: Vec<f64> = (0..n).map(|i| genetic[i] + config.rho * u[i]).collect();
        let sigma_x = unit_variance_scale(&t_base, &ex0, "exposure")?;
        let t: Vec<f64> = (0..n).map(|i| t_base[i] + sigma_x * ex0[i]).collect();

        let y_base: Vec<f64> = (0..n)
            .map(|i| truth.noiseless(t[i], xr(i), zr(i)) + u[i])
            .collect();
        let sigma_y = unit_variance_scale(&y_base, &ey0, "outcome")?;
        let y = (0..n).map(|i| y_base[i] + sigma_y * ey0[i]).collect();
        truth.sigma_u = sigma_u;
        truth.sigma_x = sigma_x;
        truth.sigma_y = sigma_y;
        (t, y)
    };

    let data = Dataset::new(y, t, x, COVARIATES, z, k)?;
    Ok((data, TruthOracle::Mr(truth)))
}
