//! Data-generating processes with known ground truth.
//!
//! Both generators split their randomness over two ChaCha20 streams: a
//! parameter stream (`param_seed`) for structural coefficients and a noise
//! stream (`noise_seed`) for per-row draws. Replicates that share a
//! `param_seed` therefore share the same structural problem.

mod demand;
mod mr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use demand::{generate_demand, psi, DemandConfig, DemandTruth, Standardization};
pub use mr::{beta_of_x, generate_mr, round_to_tenth, MrConfig, MrTruth};

use crate::data::TestPoint;

/// Frozen ground truth for a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TruthOracle {
    Demand(DemandTruth),
    Mr(MrTruth),
}

impl TruthOracle {
    /// Structural response without any direct instrument effect.
    pub fn structural(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            TruthOracle::Demand(d) => d.structural(t, x),
            TruthOracle::Mr(m) => m.structural(t, x),
        }
    }

    /// Direct (exclusion-violating) effect of the instruments on `y`.
    pub fn direct_effect(&self, z: &[f64]) -> f64 {
        match self {
            TruthOracle::Demand(d) => d.direct_effect(z),
            TruthOracle::Mr(m) => m.direct_effect(z),
        }
    }

    /// Population mean of [`direct_effect`](Self::direct_effect).
    pub fn mean_direct_effect(&self) -> f64 {
        match self {
            // sin of a symmetric Gaussian index has mean zero
            TruthOracle::Demand(_) => 0.0,
            TruthOracle::Mr(m) => m.mean_direct_effect(),
        }
    }

    /// `E[y | do(t), x]`, the target every estimator is scored against.
    pub fn response(&self, t: f64, x: &[f64]) -> f64 {
        self.structural(t, x) + self.mean_direct_effect()
    }

    /// Noise-free outcome of a row with instruments `z`.
    pub fn noiseless(&self, t: f64, x: &[f64], z: &[f64]) -> f64 {
        self.structural(t, x) + self.direct_effect(z)
    }

    /// `∂ response / ∂ t`; both processes are linear in the treatment.
    pub fn slope(&self, x: &[f64]) -> f64 {
        match self {
            TruthOracle::Demand(d) => d.slope(x),
            TruthOracle::Mr(m) => m.beta(x),
        }
    }

    pub fn valid_instruments(&self) -> &[usize] {
        match self {
            TruthOracle::Demand(d) => &d.valid,
            TruthOracle::Mr(m) => &m.valid,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            TruthOracle::Demand(d) => d.beta_zp.len(),
            TruthOracle::Mr(m) => m.alpha.len(),
        }
    }

    pub fn at(&self, p: &TestPoint) -> f64 {
        self.response(p.t, &p.x)
    }
}

pub(crate) fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}
