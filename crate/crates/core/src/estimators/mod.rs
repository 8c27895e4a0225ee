//! Per-instrument IV estimators producing an effect function `f̂(t, x)`.
//!
//! Three families share one fitted representation:
//!
//! * linear two-stage least squares, `f̂ = a + xᵀc + β t`;
//! * conditionally linear, `f̂ = φ(x)ᵀh + t · φ(x)ᵀg`, where `φ` is a
//!   tensor basis of the covariates;
//! * series (sieve) IV, `f̂ = Σ c_r b_r(t) + ψ(x)ᵀd`.
//!
//! Every family first regresses the treatment side on covariates plus the
//! selected instruments, checks the first-stage F statistic, then regresses
//! the outcome on the fitted treatment side.

mod cond_linear;
mod ensemble;
mod linear;
mod sieve;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use ensemble::{fit_ensemble, Conditioning, EnsembleFit, EnsembleFitConfig, InstrumentFailure};

use crate::basis::{BasisSpec, CovariateBasis, Expansion1d};
use crate::data::{Dataset, TestPoint};
use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;

/// Ridge weight per training row used when `ridge_lambda` is unset for the
/// basis estimators.
pub const DEFAULT_RIDGE_PER_ROW: f64 = 1e-6;
pub const DEFAULT_WEAK_INSTRUMENT_F: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    LinearTsls,
    CondLinear,
    Sieve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub basis: BasisSpec,
    /// `None` means 0 for linear 2SLS and `1e-6 · n` for the basis estimators.
    pub ridge_lambda: Option<f64>,
    pub weak_instrument_threshold: f64,
}

impl EstimatorSpec {
    pub fn linear() -> Self {
        Self {
            kind: EstimatorKind::LinearTsls,
            basis: BasisSpec::polynomial(1),
            ridge_lambda: None,
            weak_instrument_threshold: DEFAULT_WEAK_INSTRUMENT_F,
        }
    }

    pub fn cond_linear(basis: BasisSpec) -> Self {
        Self {
            kind: EstimatorKind::CondLinear,
            basis,
            ..Self::linear()
        }
    }

    pub fn sieve(degree: usize) -> Self {
        Self {
            kind: EstimatorKind::Sieve,
            basis: BasisSpec::polynomial(degree),
            ..Self::linear()
        }
    }

    pub fn with_ridge(mut self, lambda: f64) -> Self {
        self.ridge_lambda = Some(lambda);
        self
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.ridge_lambda.unwrap_or(match self.kind {
            EstimatorKind::LinearTsls => 0.0,
            _ => DEFAULT_RIDGE_PER_ROW * n as f64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.ridge_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("ridge_lambda must be >= 0, got {l}")));
            }
        }
        if self.kind != EstimatorKind::LinearTsls && self.basis.degree == 0 {
            return Err(Error::Config("basis degree must be >= 1".into()));
        }
        if !(self.weak_instrument_threshold >= 0.0) {
            return Err(Error::Config("weak_instrument_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_train: usize,
    pub first_stage_f: f64,
    pub first_stage_resid_var: f64,
    /// Mean squared structural residual `y - f̂(t, x)` on the training rows.
    pub second_stage_resid_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Model {
    Linear {
        intercept: f64,
        covariates: Vec<f64>,
        slope: f64,
    },
    CondLinear {
        basis: CovariateBasis,
        /// Coefficients of the treatment-free part `h`.
        h: Vec<f64>,
        /// Coefficients of the slope function `g`.
        g: Vec<f64>,
    },
    Sieve {
        treatment: Expansion1d,
        covariates: CovariateBasis,
        treatment_coef: Vec<f64>,
        covariate_coef: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEstimator {
    pub spec: EstimatorSpec,
    /// Instrument columns excluded from the outcome equation.
    pub instruments: Vec<usize>,
    /// Instrument columns treated as observed covariates in both stages.
    pub conditioning: Vec<usize>,
    pub d: usize,
    pub k: usize,
    /// First-stage coefficients, one vector per treatment-side target.
    pub first_stage: Vec<Vec<f64>>,
    pub model: Model,
    pub diagnostics: Diagnostics,
}

/// Anything that maps a test point to an effect estimate.
pub trait EffectFunction: Sync {
    fn predict(&self, point: &TestPoint) -> Result<f64>;

    /// Predictions at every treatment value in `ts` for fixed covariates and
    /// instruments.
    fn predict_along(&self, x: &[f64], z: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        let mut p = TestPoint::with_instruments(0.0, x.to_vec(), z.to_vec());
        ts.iter()
            .map(|&t| {
                p.t = t;
                self.predict(&p)
            })
            .collect()
    }
}

impl<F> EffectFunction for F
where
    F: Fn(&TestPoint) -> Result<f64> + Sync,
{
    fn predict(&self, point: &TestPoint) -> Result<f64> {
        self(point)
    }
}

impl EffectFunction for FittedEstimator {
    fn predict(&self, point: &TestPoint) -> Result<f64> {
        FittedEstimator::predict(self, point)
    }

    fn predict_along(&self, x: &[f64], z: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        let p = TestPoint::with_instruments(0.0, x.to_vec(), z.to_vec());
        if let Some((a, b)) = self.intercept_and_slope(&p)? {
            return Ok(ts.iter().map(|t| a + b * t).collect());
        }
        let Model::Sieve {
            treatment,
            covariates,
            treatment_coef,
            covariate_coef,
        } = &self.model
        else {
            unreachable!("only sieve fits are nonlinear in t")
        };
        let base = dot(covariate_coef, &covariates.eval(&self.covariate_row(&p)?)?);
        let mut tb = Vec::with_capacity(treatment.len());
        Ok(ts
            .iter()
            .map(|&t| {
                tb.clear();
                treatment.push(t, &mut tb);
                base + dot(treatment_coef, &tb)
            })
            .collect())
    }
}

impl FittedEstimator {
    /// Covariates followed by the conditioning instruments.
    fn covariate_row(&self, point: &TestPoint) -> Result<Vec<f64>> {
        if point.x.len() != self.d {
            return Err(Error::Dimension(format!("estimator expects {} covariates, got {}", self.d, point.x.len())));
        }
        let mut w = point.x.clone();
        if !self.conditioning.is_empty() {
            if point.z.len() != self.k {
                return Err(Error::Dimension(format!(
                    "estimator conditions on instruments and needs {} z values, got {}",
                    self.k,
                    point.z.len()
                )));
            }
            w.extend(self.conditioning.iter().map(|&c| point.z[c]));
        }
        Ok(w)
    }

    /// `(a(x), b(x))` with `f̂(t, x) = a + b t`, for models linear in `t`.
    pub fn intercept_and_slope(&self, point: &TestPoint) -> Result<Option<(f64, f64)>> {
        let w = self.covariate_row(point)?;
        Ok(match &self.model {
            Model::Linear {
                intercept,
                covariates,
                slope,
            } => Some((intercept + dot(covariates, &w), *slope)),
            Model::CondLinear { basis, h, g } => {
                let phi = basis.eval(&w)?;
                Some((dot(h, &phi), dot(g, &phi)))
            }
            Model::Sieve { .. } => None,
        })
    }

    pub fn predict(&self, point: &TestPoint) -> Result<f64> {
        if let Model::Sieve {
            treatment,
            covariates,
            treatment_coef,
            covariate_coef,
        } = &self.model
        {
            let w = self.covariate_row(point)?;
            let mut tb = Vec::with_capacity(treatment.len());
            treatment.push(point.t, &mut tb);
            return Ok(dot(treatment_coef, &tb) + dot(covariate_coef, &covariates.eval(&w)?));
        }
        let (a, b) = self.intercept_and_slope(point)?.expect("linear-in-t model");
        Ok(a + b * point.t)
    }

    /// The slope function `g(φ(x))` for conditionally linear fits, or `β` for
    /// linear 2SLS.
    pub fn slope_at(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let p = TestPoint::with_instruments(0.0, x.to_vec(), z.to_vec());
        match self.intercept_and_slope(&p)? {
            Some((_, b)) => Ok(b),
            None => Err(Error::Config("sieve estimators have no constant slope".into())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which instruments identify the effect and which are conditioned on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitTarget {
    pub instruments: Vec<usize>,
    pub conditioning: Vec<usize>,
}

impl FitTarget {
    pub fn single(j: usize) -> Self {
        Self {
            instruments: vec![j],
            conditioning: Vec::new(),
        }
    }

    pub fn joint(instruments: Vec<usize>) -> Self {
        Self {
            instruments,
            conditioning: Vec::new(),
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::Config("at least one instrument required".into()));
        }
        let mut seen = vec![false; k];
        for &j in self.instruments.iter().chain(&self.conditioning) {
            if j >= k {
                return Err(Error::Config(format!("instrument {j} out of range for k={k}")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Config(format!("instrument {j} listed twice")));
            }
        }
        Ok(())
    }
}

/// Training rows viewed as covariate rows `w = [x, z_conditioning]`.
pub(crate) struct TrainingView<'a> {
    pub data: &'a Dataset,
    pub target: &'a FitTarget,
}

impl TrainingView<'_> {
    pub fn width(&self) -> usize {
        self.data.d() + self.target.conditioning.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut w = self.data.x_row(i).to_vec();
        let z = self.data.z_row(i);
        w.extend(self.target.conditioning.iter().map(|&c| z[c]));
        w
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let d = self.data.d();
        if c < d {
            self.data.x_col(c)
        } else {
            self.data.z_col(self.target.conditioning[c - d])
        }
    }

    pub fn instrument(&self, i: usize, slot: usize) -> f64 {
        self.data.z_row(i)[self.target.instruments[slot]]
    }
}

/// First-stage regression of each column of `targets` on `full`, with the F
/// statistic for the block of columns `full` adds over `restricted`.
pub(crate) struct FirstStage {
    pub coef: DMatrix<f64>,
    pub fitted: DMatrix<f64>,
    pub f_stat: f64,
    pub resid_var: f64,
    /// Numerical rank of the covariate-only design.
    pub restricted_rank: usize,
}

pub(crate) fn first_stage(
    restricted: &DMatrix<f64>,
    full: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambda: f64,
    target: &FitTarget,
    threshold: f64,
) -> Result<FirstStage> {
    let n = full.nrows();
    let weak = |f_stat: f64| Error::WeakInstrument {
        instrument: target.instruments[0],
        f_stat,
        threshold,
    };
    let base = lstsq_min_norm(restricted, targets, lambda)?;
    let sol = lstsq_min_norm(full, targets, lambda)?;
    // instruments that add no rank over the covariates carry no information
    let q = sol.rank.saturating_sub(base.rank);
    if q == 0 {
        return Err(weak(0.0));
    }
    let df = (n - sol.rank) as f64;
    let f_stat = base
        .rss
        .iter()
        .zip(&sol.rss)
        .map(|(&r0, &r1)| {
            if r1 <= 0.0 {
                if r0 > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                ((r0 - r1).max(0.0) / q as f64) / (r1 / df)
            }
        })
        .fold(f64::INFINITY, f64::min);
    if !(f_stat >= threshold) {
        return Err(weak(if f_stat.is_nan() { 0.0 } else { f_stat }));
    }
    let fitted = full * &sol.coef;
    Ok(FirstStage {
        resid_var: sol.rss[0] / df,
        coef: sol.coef,
        fitted,
        f_stat,
        restricted_rank: base.rank,
    })
}

/// Outcome regression. Collinear covariate columns are tolerated (the
/// minimum-norm solution gives unique fitted values), but without ridge the
/// `identifying` fitted-treatment columns must add full rank.
pub(crate) fn second_stage(
    design: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    base_rank: usize,
    identifying: usize,
) -> Result<Vec<f64>> {
    let sol = lstsq_min_norm(design, &DMatrix::from_column_slice(y.len(), 1, y), lambda)?;
    if lambda == 0.0 && sol.rank < base_rank + identifying {
        return Err(Error::Singular {
            rows: design.nrows(),
            cols: design.ncols(),
            rank: sol.rank,
        });
    }
    Ok(sol.coef.column(0).iter().copied().collect())
}

pub(crate) fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// Fits one estimator of `spec.kind` for the given instrument roles.
pub fn fit_estimator(data: &Dataset, target: &FitTarget, spec: &EstimatorSpec) -> Result<FittedEstimator> {
    spec.validate()?;
    target.validate(data.k())?;
    let view = TrainingView { data, target };
    let (first_stage, model, diag) = match spec.kind {
        EstimatorKind::LinearTsls => linear::fit(&view, spec)?,
        EstimatorKind::CondLinear => cond_linear::fit(&view, spec)?,
        EstimatorKind::Sieve => sieve::fit(&view, spec)?,
    };
    let mut fitted = FittedEstimator {
        spec: spec.clone(),
        instruments: target.instruments.clone(),
        conditioning: target.conditioning.clone(),
        d: data.d(),
        k: data.k(),
        first_stage,
        model,
        diagnostics: diag,
    };
    fitted.diagnostics.second_stage_resid_var = structural_residual_variance(&fitted, data)?;
    if !fitted_is_finite(&fitted) {
        return Err(Error::Singular {
            rows: data.n(),
            cols: 0,
            rank: 0,
        });
    }
    Ok(fitted)
}

fn structural_residual_variance(est: &FittedEstimator, data: &Dataset) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..data.n() {
        let r = data.y()[i] - est.predict(&data.point(i))?;
        acc += r * r;
    }
    Ok(acc / data.n() as f64)
}

fn fitted_is_finite(est: &FittedEstimator) -> bool {
    let coefs: Vec<&[f64]> = match &est.model {
        Model::Linear { covariates, .. } => vec![covariates],
        Model::CondLinear { h, g, .. } => vec![h, g],
        Model::Sieve {
            treatment_coef,
            covariate_coef,
            ..
        } => vec![treatment_coef, covariate_coef],
    };
    coefs.iter().all(|c| c.iter().all(|v| v.is_finite()))
        && est.first_stage.iter().flatten().all(|v| v.is_finite())
        && match est.model {
            Model::Linear { intercept, slope, .. } => intercept.is_finite() && slope.is_finite(),
            _ => true,
        }
}

fn with_kind(spec: &EstimatorSpec, kind: EstimatorKind) -> EstimatorSpec {
    EstimatorSpec { kind, ..spec.clone() }
}

/// Linear 2SLS with instrument `j`: stage 1 `t ~ [1, x, z_j]`, stage 2
/// `y ~ [1, x, t̂]`.
pub fn fit_linear_tsls(data: &Dataset, j: usize, spec: &EstimatorSpec) -> Result<FittedEstimator> {
    fit_estimator(data, &FitTarget::single(j), &with_kind(spec, EstimatorKind::LinearTsls))
}

pub fn fit_cond_linear(data: &Dataset, j: usize, spec: &EstimatorSpec) -> Result<FittedEstimator> {
    fit_estimator(data, &FitTarget::single(j), &with_kind(spec, EstimatorKind::CondLinear))
}

pub fn fit_sieve(data: &Dataset, j: usize, spec: &EstimatorSpec) -> Result<FittedEstimator> {
    fit_estimator(data, &FitTarget::single(j), &with_kind(spec, EstimatorKind::Sieve))
}

/// Evaluates `estimator` at `point`.
pub fn predict(estimator: &FittedEstimator, point: &TestPoint) -> Result<f64> {
    estimator.predict(point)
}
