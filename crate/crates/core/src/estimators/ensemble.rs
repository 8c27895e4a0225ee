use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_estimator, EstimatorSpec, FitTarget, FittedEstimator};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// How the remaining instruments enter each per-instrument fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Other instruments are ignored.
    #[default]
    Independent,
    /// Other instruments are conditioned on as covariates.
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFitConfig {
    pub spec: EstimatorSpec,
    /// Instrument columns to fit; `None` means all of them.
    #[serde(default)]
    pub instruments: Option<Vec<usize>>,
    #[serde(default)]
    pub conditioning: Conditioning,
    /// Drop instruments whose fit fails instead of aborting.
    #[serde(default)]
    pub skip_failed: bool,
}

impl EnsembleFitConfig {
    pub fn new(spec: EstimatorSpec) -> Self {
        Self {
            spec,
            instruments: None,
            conditioning: Conditioning::Independent,
            skip_failed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentFailure {
    pub instrument: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct EnsembleFit {
    /// Successful fits in instrument order.
    pub estimators: Vec<FittedEstimator>,
    pub failures: Vec<InstrumentFailure>,
}

/// Fits one estimator per instrument. Fits run in parallel on the current
/// rayon pool; results come back in instrument order.
pub fn fit_ensemble(data: &Dataset, config: &EnsembleFitConfig) -> Result<EnsembleFit> {
    let k = data.k();
    let instruments: Vec<usize> = match &config.instruments {
        Some(list) => list.clone(),
        None => (0..k).collect(),
    };
    if instruments.is_empty() {
        return Err(Error::Config("ensemble needs at least one instrument".into()));
    }
    let targets: Vec<FitTarget> = instruments
        .iter()
        .map(|&j| FitTarget {
            instruments: vec![j],
            conditioning: match config.conditioning {
                Conditioning::Independent => Vec::new(),
                Conditioning::LeaveOneOut => (0..k).filter(|&c| c != j).collect(),
            },
        })
        .collect();
    let results: Vec<Result<FittedEstimator>> = targets
        .par_iter()
        .map(|target| fit_estimator(data, target, &config.spec))
        .collect();

    let mut estimators = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (j, r) in instruments.iter().zip(results) {
        match r {
            Ok(e) => estimators.push(e),
            Err(e) if config.skip_failed => failures.push(InstrumentFailure {
                instrument: *j,
                error: e.to_string(),
            }),
            Err(e) => return Err(e.context(format!("fitting estimator for instrument {j}"))),
        }
    }
    if estimators.is_empty() {
        let detail: Vec<String> = failures
            .iter()
            .map(|f| format!("instrument {}: {}", f.instrument, f.error))
            .collect();
        return Err(Error::Config(format!("every instrument failed to fit ({})", detail.join("; "))));
    }
    Ok(EnsembleFit { estimators, failures })
}
