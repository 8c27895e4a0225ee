use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{build_grid, EvalGrid, GridSpec};
use super::metrics::{grid_predictions, grid_truth, mse_tables, slope_bias_with};
use crate::data::{split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_ensemble, fit_estimator, Conditioning, EffectFunction, EnsembleFitConfig, EstimatorSpec, FitTarget,
    FittedEstimator, InstrumentFailure,
};
use crate::modal::{aggregate, AggregationConfig};
use crate::sim::TruthOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    ModeIv { v: usize },
    MeanEnsemble,
    /// One estimator using every instrument jointly.
    NaiveAll,
    /// One estimator using exactly the truly valid instruments.
    OracleValid,
    /// The ensemble member fitted on instrument `j`.
    Single { j: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ModeIv { .. } => "modeiv",
            Method::MeanEnsemble => "mean_ensemble",
            Method::NaiveAll => "naive_all",
            Method::OracleValid => "oracle_valid",
            Method::Single { .. } => "single",
        }
    }

    pub fn v(&self) -> Option<usize> {
        match self {
            Method::ModeIv { v } => Some(*v),
            _ => None,
        }
    }

    fn uses_ensemble(&self) -> bool {
        matches!(self, Method::ModeIv { .. } | Method::MeanEnsemble | Method::Single { .. })
    }
}

/// `modeiv_v4`, `mean_ensemble`, `naive_all`, `oracle_valid`, `single_3`.
impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::ModeIv { v } => write!(f, "modeiv_v{v}"),
            Method::Single { j } => write!(f, "single_{j}"),
            m => f.write_str(m.name()),
        }
    }
}

/// Accepts the [`Display`](fmt::Display) forms plus the short aliases
/// `mean`, `naive` and `oracle`. A bare `modeiv` parses with `v = 0`, meaning
/// "resolve to the default for the ensemble size".
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method '{s}' (expected modeiv[_vN], mean, naive, oracle, single_J)"));
        Ok(match s {
            "modeiv" => Method::ModeIv { v: 0 },
            "mean" | "mean_ensemble" => Method::MeanEnsemble,
            "naive" | "naive_all" => Method::NaiveAll,
            "oracle" | "oracle_valid" => Method::OracleValid,
            _ => {
                if let Some(v) = s.strip_prefix("modeiv_v") {
                    Method::ModeIv { v: v.parse().map_err(|_| bad())? }
                } else if let Some(j) = s.strip_prefix("single_") {
                    Method::Single { j: j.parse().map_err(|_| bad())? }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub seed: u64,
    pub mse: f64,
    pub cate_abs_bias: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub spec: EstimatorSpec,
    #[serde(default)]
    pub conditioning: Conditioning,
    #[serde(default)]
    pub grid: GridSpec,
    /// Drop instruments whose fit fails (recorded in `Scoring::failures`)
    /// instead of aborting the replicate.
    #[serde(default)]
    pub skip_failed: bool,
    /// Train/validation fractions; the seed is taken from `seed`.
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl ComparisonConfig {
    pub fn new(spec: EstimatorSpec, seed: u64) -> Self {
        Self {
            spec,
            conditioning: Conditioning::Independent,
            grid: GridSpec::default(),
            skip_failed: false,
            train_fraction: 0.9,
            validation_fraction: 0.1,
            seed,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }
}

/// Fitted models and the shared grid for one replicate.
pub struct Scoring<'a> {
    pub truth: &'a TruthOracle,
    pub grid: EvalGrid,
    pub seed: u64,
    pub ensemble: Vec<FittedEstimator>,
    pub ensemble_secs: f64,
    pub failures: Vec<InstrumentFailure>,
    pub naive: Option<(FittedEstimator, f64)>,
    pub oracle: Option<(FittedEstimator, f64)>,
}

/// Held-out rows for the grid: validation if present, otherwise test.
pub fn comparison_split(data: &Dataset, config: &ComparisonConfig) -> Result<(Dataset, Dataset)> {
    let (train, val, test) = split(data, &config.split_spec())?;
    let held = val
        .or(test)
        .ok_or_else(|| Error::Config("comparison needs held-out rows for the covariate sample".into()))?;
    Ok((train, held))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

/// Fits the joint-instrument baseline on `instruments`.
pub fn fit_joint(train: &Dataset, instruments: Vec<usize>, config: &ComparisonConfig) -> Result<FittedEstimator> {
    fit_estimator(train, &FitTarget::joint(instruments), &config.spec)
}

impl<'a> Scoring<'a> {
    /// Splits, builds the grid and fits whatever `methods` need.
    pub fn prepare(data: &Dataset, truth: &'a TruthOracle, methods: &[Method], config: &ComparisonConfig) -> Result<Self> {
        let (train, held) = comparison_split(data, config)?;
        let grid = build_grid(&config.grid, &train, &held, config.seed)?;
        let (ensemble, failures, ensemble_secs) = if methods.iter().any(Method::uses_ensemble) {
            let cfg = EnsembleFitConfig {
                conditioning: config.conditioning,
                skip_failed: config.skip_failed,
                ..EnsembleFitConfig::new(config.spec.clone())
            };
            let (fit, secs) = timed(|| fit_ensemble(&train, &cfg))?;
            (fit.estimators, fit.failures, secs)
        } else {
            (Vec::new(), Vec::new(), 0.0)
        };
        let naive = if methods.contains(&Method::NaiveAll) {
            Some(timed(|| fit_joint(&train, (0..data.k()).collect(), config)).map_err(|e| e.context("naive_all"))?)
        } else {
            None
        };
        let oracle = if methods.contains(&Method::OracleValid) {
            let valid = truth.valid_instruments().to_vec();
            Some(timed(|| fit_joint(&train, valid, config)).map_err(|e| e.context("oracle_valid"))?)
        } else {
            None
        };
        Ok(Self {
            truth,
            grid,
            seed: config.seed,
            ensemble,
            ensemble_secs,
            failures,
            naive,
            oracle,
        })
    }

    /// Scores each method on the shared grid, in the order given.
    pub fn score(&self, methods: &[Method]) -> Result<Vec<MethodResult>> {
        let truth_table = grid_truth(self.truth, &self.grid);
        let probes = self.grid.probes;
        let true_slopes: Vec<f64> = self.grid.rows.iter().map(|r| self.truth.slope(&r.x)).collect();
        let ensemble_tables = if methods.iter().any(Method::uses_ensemble) {
            if self.ensemble.is_empty() {
                return Err(Error::Config("ensemble methods requested without a fitted ensemble".into()));
            }
            let start = Instant::now();
            let tables = EnsembleTables::build(&self.ensemble, &self.grid)?;
            Some((tables, start.elapsed().as_secs_f64()))
        } else {
            None
        };

        let mut out = Vec::with_capacity(methods.len());
        for &method in methods {
            let start = Instant::now();
            let (mse, bias, base_secs) = match method {
                Method::NaiveAll | Method::OracleValid => {
                    let (est, secs) = match method {
                        Method::NaiveAll => self.naive.as_ref(),
                        _ => self.oracle.as_ref(),
                    }
                    .ok_or_else(|| Error::Config(format!("{method} was not fitted")))?;
                    let (mse, bias) = self.score_single(est, &truth_table, &true_slopes)?;
                    (mse, bias, *secs)
                }
                Method::Single { j } => {
                    let est = self
                        .ensemble
                        .iter()
                        .find(|e| e.instruments == [j])
                        .ok_or_else(|| Error::Config(format!("no ensemble member for instrument {j}")))?;
                    let (mse, bias) = self.score_single(est, &truth_table, &true_slopes)?;
                    (mse, bias, self.ensemble_secs)
                }
                Method::ModeIv { .. } | Method::MeanEnsemble => {
                    let (tables, secs) = ensemble_tables.as_ref().expect("built above");
                    let combine = Combiner::new(method, self.ensemble.len())?;
                    let (mse, bias) = tables.score(&combine, &truth_table, probes, &true_slopes)?;
                    (mse, bias, self.ensemble_secs + secs)
                }
            };
            let method = match method {
                Method::ModeIv { v: 0 } => Method::ModeIv {
                    v: AggregationConfig::default().resolve_v(self.ensemble.len()),
                },
                m => m,
            };
            out.push(MethodResult {
                method,
                seed: self.seed,
                mse,
                cate_abs_bias: bias,
                runtime_secs: base_secs + start.elapsed().as_secs_f64(),
            });
        }
        Ok(out)
    }

    fn score_single<F: EffectFunction>(&self, f: &F, truth_table: &[Vec<f64>], slopes: &[f64]) -> Result<(f64, f64)> {
        let mse = mse_tables(&grid_predictions(f, &self.grid)?, truth_table)?;
        let rows = &self.grid.rows;
        let probes = self.grid.probes;
        let at: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| f.predict_along(&r.x, &r.z, &[probes.0, probes.1]))
            .collect::<Result<_>>()?;
        let bias = slope_bias_with(rows.len(), probes, |r, t| Ok(at[r][(t != probes.0) as usize]), |r| slopes[r])?;
        Ok((mse, bias))
    }
}

enum Combiner {
    Modal(AggregationConfig),
    Mean,
}

impl Combiner {
    fn new(method: Method, k: usize) -> Result<Self> {
        Ok(match method {
            Method::ModeIv { v } => {
                let cfg = AggregationConfig {
                    v: (v != 0).then_some(v),
                    ..AggregationConfig::default()
                };
                cfg.validate(k).map_err(|e| e.context(format!("{method}")))?;
                Combiner::Modal(cfg)
            }
            _ => Combiner::Mean,
        })
    }

    fn apply(&self, values: &[f64]) -> Result<f64> {
        match self {
            Combiner::Modal(cfg) => aggregate(values, cfg),
            Combiner::Mean => Ok(values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

/// Every ensemble member evaluated on the grid and at the slope probes.
struct EnsembleTables {
    /// `[row][t_index][estimator]`.
    grid: Vec<Vec<Vec<f64>>>,
    /// `[row][probe][estimator]`.
    probes: Vec<[Vec<f64>; 2]>,
}

impl EnsembleTables {
    fn build(ensemble: &[FittedEstimator], grid: &EvalGrid) -> Result<Self> {
        let n_t = grid.t.len();
        let per_row: Vec<(Vec<Vec<f64>>, [Vec<f64>; 2])> = grid
            .rows
            .par_iter()
            .map(|r| {
                let mut by_t = vec![Vec::with_capacity(ensemble.len()); n_t];
                let mut at_probe = [Vec::with_capacity(ensemble.len()), Vec::with_capacity(ensemble.len())];
                for e in ensemble {
                    let line = e.predict_along(&r.x, &r.z, &grid.t)?;
                    for (slot, v) in by_t.iter_mut().zip(line) {
                        slot.push(v);
                    }
                    let p = e.predict_along(&r.x, &r.z, &[grid.probes.0, grid.probes.1])?;
                    at_probe[0].push(p[0]);
                    at_probe[1].push(p[1]);
                }
                Ok((by_t, at_probe))
            })
            .collect::<Result<_>>()?;
        let (grid, probes) = per_row.into_iter().unzip();
        Ok(Self { grid, probes })
    }

    fn score(&self, combine: &Combiner, truth: &[Vec<f64>], probes: (f64, f64), slopes: &[f64]) -> Result<(f64, f64)> {
        let pred: Vec<Vec<f64>> = self
            .grid
            .par_iter()
            .map(|row| row.iter().map(|vals| combine.apply(vals)).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let mse = mse_tables(&pred, truth)?;
        let at: Vec<[f64; 2]> = self
            .probes
            .iter()
            .map(|[a, b]| Ok([combine.apply(a)?, combine.apply(b)?]))
            .collect::<Result<_>>()?;
        let bias = slope_bias_with(at.len(), probes, |r, t| Ok(at[r][(t != probes.0) as usize]), |r| slopes[r])?;
        Ok((mse, bias))
    }
}

/// Fits every method on the same training split and scores all of them on
/// the same grid.
pub fn run_comparison(
    data: &Dataset,
    truth: &TruthOracle,
    methods: &[Method],
    config: &ComparisonConfig,
) -> Result<Vec<MethodResult>> {
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    Scoring::prepare(data, truth, methods, config)?.score(methods)
}

/// One ModeIV result per `V`, all from a single fitted ensemble.
pub fn sensitivity_sweep(
    data: &Dataset,
    truth: &TruthOracle,
    v_range: impl IntoIterator<Item = usize>,
    config: &ComparisonConfig,
) -> Result<Vec<MethodResult>> {
    let methods: Vec<Method> = v_range.into_iter().map(|v| Method::ModeIv { v }).collect();
    for m in &methods {
        if m.v() < Some(2) || m.v() > Some(data.k()) {
            return Err(Error::Config(format!("V range must lie within [2, {}], got {m}", data.k())));
        }
    }
    run_comparison(data, truth, &methods, config)
}
