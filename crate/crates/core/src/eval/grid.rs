use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TestPoint};
use crate::error::{Error, Result};
use crate::linalg::percentile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bounds {
    /// Percentiles (0..=100) of the training treatment.
    Percentile { lo: f64, hi: f64 },
    Explicit { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub bounds: Bounds,
    /// Held-out covariate rows crossed with the treatment grid.
    pub x_sample: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_points: 1000,
            bounds: Bounds::Percentile { lo: 2.5, hi: 97.5 },
            x_sample: 200,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {}", self.n_points)));
        }
        if self.x_sample == 0 {
            return Err(Error::Config("grid x_sample must be positive".into()));
        }
        match self.bounds {
            Bounds::Percentile { lo, hi } if !(0.0 <= lo && lo < hi && hi <= 100.0) => {
                Err(Error::Config(format!("percentile bounds must satisfy 0 <= lo < hi <= 100, got {lo}, {hi}")))
            }
            Bounds::Explicit { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(Error::Config(format!("explicit bounds must satisfy lo < hi, got {lo}, {hi}")))
            }
            _ => Ok(()),
        }
    }
}

/// Held-out covariate row together with its instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

/// Uniform treatment grid crossed with a fixed set of held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub t: Vec<f64>,
    pub rows: Vec<GridRow>,
    /// 25th and 75th percentiles of the training treatment.
    pub probes: (f64, f64),
}

impl EvalGrid {
    pub fn len(&self) -> usize {
        self.t.len() * self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, row: usize, t: f64) -> TestPoint {
        let r = &self.rows[row];
        TestPoint::with_instruments(t, r.x.clone(), r.z.clone())
    }

    /// Row-major over (row, t).
    pub fn points(&self) -> Vec<TestPoint> {
        (0..self.rows.len())
            .flat_map(|r| self.t.iter().map(move |&t| self.point(r, t)))
            .collect()
    }

    /// FNV-1a over the bit patterns of every grid coordinate.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        self.t.iter().for_each(|&v| eat(v));
        for r in &self.rows {
            r.x.iter().chain(&r.z).for_each(|&v| eat(v));
        }
        eat(self.probes.0);
        eat(self.probes.1);
        h
    }
}

pub fn build_grid(spec: &GridSpec, train: &Dataset, held_out: &Dataset, seed: u64) -> Result<EvalGrid> {
    spec.validate()?;
    let (lo, hi) = match spec.bounds {
        Bounds::Percentile { lo, hi } => (percentile(train.t(), lo), percentile(train.t(), hi)),
        Bounds::Explicit { lo, hi } => (lo, hi),
    };
    if !(hi > lo) {
        return Err(Error::Config(format!("degenerate treatment range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (spec.n_points - 1) as f64;
    let t = (0..spec.n_points)
        .map(|i| if i + 1 == spec.n_points { hi } else { lo + step * i as f64 })
        .collect();
    let take = spec.x_sample.min(held_out.n());
    let mut picks = sample(&mut ChaCha20Rng::seed_from_u64(seed), held_out.n(), take).into_vec();
    picks.sort_unstable();
    let rows = picks
        .into_iter()
        .map(|i| GridRow {
            x: held_out.x_row(i).to_vec(),
            z: held_out.z_row(i).to_vec(),
        })
        .collect();
    let probes = (percentile(train.t(), 25.0), percentile(train.t(), 75.0));
    Ok(EvalGrid { t, rows, probes })
}
