//! Modal aggregation: the shortest interval holding `V` of the `k`
//! per-instrument estimates, and the (weighted) mean of the estimates inside
//! it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TestPoint;
use crate::error::{Error, Result};
use crate::estimators::EffectFunction;

/// `⌈k/2⌉`, raised to the minimum of 2.
pub fn default_v(k: usize) -> usize {
    k.div_ceil(2).max(2)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "weights")]
pub enum Weighting {
    #[default]
    Uniform,
    /// One non-negative weight per estimator, renormalized over the members.
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    /// Lower bound on the number of valid instruments; `None` means
    /// [`default_v`] of the ensemble size.
    pub v: Option<usize>,
    #[serde(default)]
    pub weighting: Weighting,
}

impl AggregationConfig {
    pub fn with_v(v: usize) -> Self {
        Self {
            v: Some(v),
            weighting: Weighting::Uniform,
        }
    }

    pub fn resolve_v(&self, k: usize) -> usize {
        self.v.unwrap_or_else(|| default_v(k))
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let v = self.resolve_v(k);
        if v < 2 || v > k {
            return Err(Error::Config(format!("V must satisfy 2 <= V <= k={k}, got {v}")));
        }
        if let Weighting::Supplied(w) = &self.weighting {
            if w.len() != k {
                return Err(Error::Dimension(format!("{} weights supplied for {k} estimators", w.len())));
            }
            if let Some(bad) = w.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
                return Err(Error::Config(format!("weights must be finite and non-negative, got {bad}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalInterval {
    pub lower: f64,
    pub upper: f64,
    /// Indices of every value inside `[lower, upper]`, ascending.
    pub members: Vec<usize>,
}

impl ModalInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Members as a `;`-separated list.
    pub fn members_label(&self) -> String {
        self.members.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
    }
}

/// Scans the `k - V + 1` windows of `V` consecutive sorted values and keeps
/// the narrowest, preferring the leftmost on ties.
pub fn shortest_interval(values: &[f64], v: usize) -> Result<ModalInterval> {
    let k = values.len();
    if v < 2 || v > k {
        return Err(Error::Config(format!("V must satisfy 2 <= V <= k={k}, got {v}")));
    }
    if let Some(row) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { field: "estimate", row });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for start in 0..=k - v {
        let width = sorted[start + v - 1] - sorted[start];
        if width < best_width {
            best = start;
            best_width = width;
        }
    }
    let (lower, upper) = (sorted[best], sorted[best + v - 1]);
    let members = (0..k).filter(|&i| values[i] >= lower && values[i] <= upper).collect();
    Ok(ModalInterval { lower, upper, members })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalEstimate {
    pub value: f64,
    pub interval: ModalInterval,
}

/// Modal prediction together with its interval.
pub fn aggregate_detail(values: &[f64], config: &AggregationConfig) -> Result<ModalEstimate> {
    config.validate(values.len())?;
    let interval = shortest_interval(values, config.resolve_v(values.len()))?;
    let value = match &config.weighting {
        Weighting::Uniform => {
            interval.members.iter().map(|&i| values[i]).sum::<f64>() / interval.members.len() as f64
        }
        Weighting::Supplied(w) => {
            let total: f64 = interval.members.iter().map(|&i| w[i]).sum();
            if total <= 0.0 {
                return Err(Error::DegenerateWeights);
            }
            interval.members.iter().map(|&i| w[i] * values[i]).sum::<f64>() / total
        }
    };
    Ok(ModalEstimate { value, interval })
}

pub fn aggregate(values: &[f64], config: &AggregationConfig) -> Result<f64> {
    aggregate_detail(values, config).map(|m| m.value)
}

/// A fitted ensemble plus the rule that combines its predictions.
#[derive(Debug, Clone)]
pub struct EnsemblePredictor<P> {
    pub estimators: Vec<P>,
    pub config: AggregationConfig,
}

impl<P: EffectFunction> EnsemblePredictor<P> {
    pub fn new(estimators: Vec<P>, config: AggregationConfig) -> Result<Self> {
        config.validate(estimators.len())?;
        Ok(Self { estimators, config })
    }

    pub fn k(&self) -> usize {
        self.estimators.len()
    }

    /// Every estimator evaluated at `point`, in ensemble order.
    pub fn predictions(&self, point: &TestPoint) -> Result<Vec<f64>> {
        self.estimators.iter().map(|e| e.predict(point)).collect()
    }

    pub fn predict_mode(&self, point: &TestPoint) -> Result<ModalEstimate> {
        aggregate_detail(&self.predictions(point)?, &self.config)
    }

    /// Pointwise [`Self::predict_mode`] over `grid`, in grid order.
    pub fn predict_curve(&self, grid: &[TestPoint]) -> Result<Vec<ModalEstimate>> {
        grid.par_iter().map(|p| self.predict_mode(p)).collect()
    }
}

pub fn predict_mode<P: EffectFunction>(predictor: &EnsemblePredictor<P>, point: &TestPoint) -> Result<ModalEstimate> {
    predictor.predict_mode(point)
}

pub fn predict_curve<P: EffectFunction>(
    predictor: &EnsemblePredictor<P>,
    grid: &[TestPoint],
) -> Result<Vec<ModalEstimate>> {
    predictor.predict_curve(grid)
}
