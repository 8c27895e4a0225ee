pub mod evaluate;
pub mod fit;
pub mod reproduce;
pub mod simulate;

use std::path::Path;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use modeiv::basis::BasisSpec;
use modeiv::estimators::{Conditioning, EstimatorKind};
use modeiv::EstimatorSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Linear,
    CondLinear,
    Sieve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditioningArg {
    Independent,
    LeaveOneOut,
}

impl From<ConditioningArg> for Conditioning {
    fn from(c: ConditioningArg) -> Self {
        match c {
            ConditioningArg::Independent => Conditioning::Independent,
            ConditioningArg::LeaveOneOut => Conditioning::LeaveOneOut,
        }
    }
}

/// Estimator flags shared by `fit` and `reproduce`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimatorArgs {
    /// Per-instrument estimator family.
    #[arg(long, value_enum, default_value_t = EstimatorArg::CondLinear)]
    pub estimator: EstimatorArg,

    /// Polynomial degree of the covariate (or sieve treatment) basis.
    #[arg(long, default_value_t = 1)]
    pub degree: usize,

    /// Radial bumps added to each smooth covariate.
    #[arg(long, default_value_t = 0)]
    pub bumps: usize,

    /// Covariate columns (0-based) expanded with the polynomial/bump basis.
    #[arg(long, value_delimiter = ',')]
    pub smooth: Vec<usize>,

    /// Ridge penalty; defaults to 0 for linear and 1e-6·n otherwise.
    #[arg(long)]
    pub ridge: Option<f64>,

    /// Minimum first-stage F statistic.
    #[arg(long, default_value_t = 10.0)]
    pub weak_threshold: f64,
}

impl EstimatorArgs {
    pub fn spec(&self) -> EstimatorSpec {
        let kind = match self.estimator {
            EstimatorArg::Linear => EstimatorKind::LinearTsls,
            EstimatorArg::CondLinear => EstimatorKind::CondLinear,
            EstimatorArg::Sieve => EstimatorKind::Sieve,
        };
        EstimatorSpec {
            kind,
            basis: BasisSpec {
                degree: self.degree,
                bumps: self.bumps,
                smooth: self.smooth.clone(),
            },
            ridge_lambda: self.ridge,
            weak_instrument_threshold: self.weak_threshold,
        }
    }

    /// Whether the basis flags were left at their defaults.
    pub fn default_basis(&self) -> bool {
        self.degree == 1 && self.bumps == 0 && self.smooth.is_empty()
    }
}

/// Parses `a..b` (inclusive) or `a..=b`.
pub fn parse_range(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("expected a range like 2..8, got '{s}'"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo: usize = a.trim().parse().with_context(|| format!("bad range start in '{s}'"))?;
    let hi: usize = b.trim().parse().with_context(|| format!("bad range end in '{s}'"))?;
    if lo > hi {
        bail!("empty range '{s}'");
    }
    Ok((lo, hi))
}

pub fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    modeiv::data::write_atomic(path, bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
