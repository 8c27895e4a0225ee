use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use modeiv::basis::BasisSpec;
use modeiv::estimators::{Conditioning, EstimatorKind};
use modeiv::eval::{
    confidence_interval, plot_csv, records_from, results_csv, run_comparison, sensitivity_sweep, ComparisonConfig,
    ExperimentReport, GridSpec, Method, PlotPoint, ResultRecord,
};
use modeiv::modal::{default_v, AggregationConfig};
use modeiv::sim::{generate_demand, generate_mr, DemandConfig, MrConfig};
use modeiv::theorem::{simulate_theorem, SyntheticEstimatorSpec};
use modeiv::EstimatorSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_range, write, write_json, ConditioningArg, EstimatorArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Demand design: MSE against the exclusion-violation scale, one curve per invalid count.
    DemandBias,
    /// MR design: methods by share of valid instruments.
    MrTable,
    /// Demand design: MSE against the interval size V.
    VSensitivity,
    /// Synthetic estimators: the modal estimate's convergence in n.
    Theorem,
}

impl Experiment {
    fn dir_name(self) -> &'static str {
        match self {
            Experiment::DemandBias => "demand-bias",
            Experiment::MrTable => "mr-table",
            Experiment::VSensitivity => "v-sensitivity",
            Experiment::Theorem => "theorem",
        }
    }

    fn is_demand(self) -> bool {
        matches!(self, Experiment::DemandBias | Experiment::VSensitivity)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    /// Experiment to run.
    #[arg(value_enum)]
    pub experiment: Experiment,

    /// Number of replicates; seeds run from --seed upwards.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,

    /// Rows per dataset (demand 10000, MR 50000).
    #[arg(long)]
    pub n: Option<usize>,

    /// Instrument count (demand 8, MR 20).
    #[arg(long)]
    pub k: Option<usize>,

    #[command(flatten)]
    #[serde(flatten)]
    pub estimator: EstimatorArgs,

    /// Conditioning (demand: leave-one-out, MR: independent).
    #[arg(long, value_enum)]
    pub conditioning: Option<ConditioningArg>,

    /// Interval size for ModeIV; defaults to max(2, ceil(k/2)).
    #[arg(long)]
    pub v: Option<usize>,

    /// Exclusion-violation scales for demand-bias.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub gammas: Vec<f64>,

    /// Invalid-instrument counts for demand-bias and v-sensitivity.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub n_invalid: Vec<usize>,

    /// Violation scale used by v-sensitivity.
    #[arg(long, default_value_t = 1.0)]
    pub sensitivity_gamma: f64,

    /// V values for v-sensitivity, e.g. 2..8; defaults to 2..k.
    #[arg(long)]
    pub v_range: Option<String>,

    /// Shares of valid instruments for mr-table.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1")]
    pub valid_fracs: Vec<f64>,

    /// Estimator sample sizes for theorem.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000,1000000")]
    pub theorem_n: Vec<f64>,

    /// Monte Carlo replicates per sample size for theorem.
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,

    /// Treatment grid size.
    #[arg(long, default_value_t = 1000)]
    pub grid_points: usize,

    /// Held-out covariate rows crossed with the grid.
    #[arg(long, default_value_t = 200)]
    pub x_sample: usize,

    /// Abort on the first failing instrument instead of dropping it.
    #[arg(long)]
    pub fail_fast: bool,
}

impl ReproduceArgs {
    fn n(&self) -> usize {
        self.n.unwrap_or(if self.experiment.is_demand() { 10_000 } else { 50_000 })
    }

    fn k(&self) -> usize {
        self.k.unwrap_or(if self.experiment.is_demand() { 8 } else { 20 })
    }

    fn spec(&self) -> EstimatorSpec {
        let mut spec = self.estimator.spec();
        if spec.kind == EstimatorKind::CondLinear && self.estimator.default_basis() && self.experiment.is_demand() {
            spec.basis = BasisSpec::demand();
        }
        spec
    }

    fn comparison(&self, seed: u64) -> ComparisonConfig {
        let conditioning = match self.conditioning {
            Some(c) => c.into(),
            None if self.experiment.is_demand() => Conditioning::LeaveOneOut,
            None => Conditioning::Independent,
        };
        ComparisonConfig {
            conditioning,
            skip_failed: !self.fail_fast,
            grid: GridSpec {
                n_points: self.grid_points,
                x_sample: self.x_sample,
                ..GridSpec::default()
            },
            ..ComparisonConfig::new(self.spec(), seed)
        }
    }

    fn methods(&self) -> Vec<Method> {
        let v = self.v.unwrap_or_else(|| default_v(self.k()));
        vec![Method::ModeIv { v }, Method::MeanEnsemble, Method::NaiveAll, Method::OracleValid]
    }

    fn seed_list(&self, base: u64) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| base + i).collect()
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.seeds == 0 {
            bail!("--seeds must be at least 1");
        }
        self.spec().validate()?;
        let k = self.k();
        if let Some(v) = self.v {
            if v < 2 || v > k {
                bail!("--v must lie in 2..={k}, got {v}");
            }
        }
        if self.experiment.is_demand() {
            if let Some(&bad) = self.n_invalid.iter().find(|&&m| m >= k) {
                bail!("--n-invalid {bad} leaves no valid instrument among k={k}");
            }
            if self.n_invalid.is_empty() {
                bail!("--n-invalid needs at least one value");
            }
        }
        if self.experiment == Experiment::MrTable {
            if let Some(&bad) = self.valid_fracs.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
                bail!("--valid-fracs values must lie in (0, 1], got {bad}");
            }
        }
        Ok(())
    }
}

/// Cell label used in per-cell report files and plot curves.
fn curve(method: &str, tag: &str) -> String {
    if tag.is_empty() {
        method.to_string()
    } else {
        format!("{method}|{tag}")
    }
}

fn labelled(r: &ResultRecord) -> String {
    match r.v {
        Some(v) => format!("{}_v{v}", r.method),
        None => r.method.clone(),
    }
}

/// Mean and interval per (label, x) over seeds, for one metric.
fn plot_points<'a>(
    cells: impl Iterator<Item = (f64, String, &'a [ResultRecord])>,
    metric: &str,
) -> anyhow::Result<Vec<PlotPoint>> {
    let mut points = Vec::new();
    for (x, tag, records) in cells {
        let report = ExperimentReport::from_records(records)?;
        for row in report.rows.iter().filter(|r| r.metric == metric) {
            points.push(PlotPoint {
                x_axis_value: x,
                method: curve(&row.method, &tag),
                mean: row.mean,
                ci: row.ci_half_width,
            });
        }
    }
    Ok(points)
}

fn write_seed(dir: &Path, seed: u64, records: &[ResultRecord]) -> anyhow::Result<()> {
    write(&dir.join(seed.to_string()).join("results.csv"), &results_csv(records)?)
}

fn demand_cell(args: &ReproduceArgs, seed: u64, n_invalid: usize, gamma: f64) -> anyhow::Result<Vec<ResultRecord>> {
    let (data, truth) = generate_demand(&DemandConfig::with_invalid(args.k(), n_invalid, gamma, args.n(), seed))?;
    let results = run_comparison(&data, &truth, &args.methods(), &args.comparison(seed))
        .with_context(|| format!("seed {seed}, gamma {gamma}, n_invalid {n_invalid}"))?;
    Ok(records_from(&results, Some(gamma), Some(n_invalid)))
}

fn demand_bias(args: &ReproduceArgs, dir: &Path, seeds: &[u64]) -> anyhow::Result<Vec<ResultRecord>> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let mut records = Vec::new();
            for &n_invalid in &args.n_invalid {
                for &gamma in &args.gammas {
                    records.extend(demand_cell(args, seed, n_invalid, gamma)?);
                }
            }
            write_seed(dir, seed, &records)?;
            Ok(records)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let all: Vec<ResultRecord> = per_seed.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for &n_invalid in &args.n_invalid {
        for &gamma in &args.gammas {
            let records: Vec<ResultRecord> = all
                .iter()
                .filter(|r| r.n_invalid == Some(n_invalid) && r.gamma == Some(gamma))
                .cloned()
                .collect();
            let report = ExperimentReport::from_records(&records)?;
            write(
                &dir.join("reports").join(format!("gamma_{gamma}_invalid_{n_invalid}.csv")),
                &report.to_csv()?,
            )?;
            cells.push((gamma, format!("n_invalid={n_invalid}"), records));
        }
    }
    let points = plot_points(cells.iter().map(|(x, t, r)| (*x, t.clone(), r.as_slice())), "mse")?;
    write(&dir.join("plot_data.csv"), &plot_csv(&points)?)?;
    Ok(all)
}

fn mr_table(args: &ReproduceArgs, dir: &Path, seeds: &[u64]) -> anyhow::Result<Vec<ResultRecord>> {
    let k = args.k();
    let n_valid = |f: f64| ((f * k as f64).round() as usize).clamp(1, k);
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let mut records = Vec::new();
            for &frac in &args.valid_fracs {
                let cfg = MrConfig {
                    k,
                    n_valid: n_valid(frac),
                    n: args.n(),
                    param_seed: seed,
                    noise_seed: seed,
                    ..MrConfig::default()
                };
                let (data, truth) = generate_mr(&cfg)?;
                let results = run_comparison(&data, &truth, &args.methods(), &args.comparison(seed))
                    .with_context(|| format!("seed {seed}, valid fraction {frac}"))?;
                records.extend(records_from(&results, None, Some(k - cfg.n_valid)));
            }
            write_seed(dir, seed, &records)?;
            Ok(records)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let all: Vec<ResultRecord> = per_seed.into_iter().flatten().collect();

    let mut table = String::from("method,metric,valid_fraction,mean,ci_half_width,n_replicates\n");
    let mut cells = Vec::new();
    for &frac in &args.valid_fracs {
        let n_invalid = k - n_valid(frac);
        let records: Vec<ResultRecord> = all.iter().filter(|r| r.n_invalid == Some(n_invalid)).cloned().collect();
        for row in ExperimentReport::from_records(&records)?.rows {
            let ci = row.ci_half_width.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                table,
                "{},{},{frac},{},{ci},{}",
                row.method, row.metric, row.mean, row.n_replicates
            );
        }
        cells.push((frac, String::new(), records));
    }
    write(&dir.join("table.csv"), table.as_bytes())?;
    let points = plot_points(cells.iter().map(|(x, t, r)| (*x, t.clone(), r.as_slice())), "mse")?;
    write(&dir.join("plot_data.csv"), &plot_csv(&points)?)?;
    Ok(all)
}

fn v_sensitivity(args: &ReproduceArgs, dir: &Path, seeds: &[u64]) -> anyhow::Result<Vec<ResultRecord>> {
    let k = args.k();
    let (lo, hi) = match &args.v_range {
        Some(r) => parse_range(r)?,
        None => (2, k),
    };
    if lo < 2 || hi > k {
        bail!("--v-range must lie within 2..={k}");
    }
    let gamma = args.sensitivity_gamma;
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let mut records = Vec::new();
            for &n_invalid in &args.n_invalid {
                let (data, truth) = generate_demand(&DemandConfig::with_invalid(k, n_invalid, gamma, args.n(), seed))?;
                let results = sensitivity_sweep(&data, &truth, lo..=hi, &args.comparison(seed))
                    .with_context(|| format!("seed {seed}, n_invalid {n_invalid}"))?;
                records.extend(records_from(&results, Some(gamma), Some(n_invalid)));
            }
            write_seed(dir, seed, &records)?;
            Ok(records)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let all: Vec<ResultRecord> = per_seed.into_iter().flatten().collect();

    let mut points = Vec::new();
    for &n_invalid in &args.n_invalid {
        for v in lo..=hi {
            let values: Vec<f64> = all
                .iter()
                .filter(|r| r.n_invalid == Some(n_invalid) && r.v == Some(v) && r.metric == "mse")
                .map(|r| r.value)
                .collect();
            let (mean, ci) = summarize(&values)?;
            points.push(PlotPoint {
                x_axis_value: v as f64,
                method: curve("modeiv", &format!("n_invalid={n_invalid}")),
                mean,
                ci,
            });
        }
    }
    write(&dir.join("plot_data.csv"), &plot_csv(&points)?)?;
    Ok(all)
}

fn summarize(values: &[f64]) -> anyhow::Result<(f64, Option<f64>)> {
    Ok(match values.len() {
        0 => bail!("no values to summarize"),
        1 => (values[0], None),
        _ => {
            let (m, h) = confidence_interval(values, 0.95)?;
            (m, Some(h))
        }
    })
}

/// Nine synthetic estimators: five consistent for 1, four for 2..5; V = 5.
fn theorem(args: &ReproduceArgs, dir: &Path, seed: u64) -> anyhow::Result<()> {
    let config = AggregationConfig::with_v(args.v.unwrap_or(5));
    let rows = args
        .theorem_n
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let spec = SyntheticEstimatorSpec::with_invalid(1.0, 5, &[2.0, 3.0, 4.0, 5.0], n, seed + i as u64);
            let est = simulate_theorem(&spec, &config, args.replicates)?;
            let (mean, ci) = summarize(&est)?;
            let sd = modeiv::linalg::variance(&est).sqrt();
            Ok((n, mean, sd, ci))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut out = String::from("n,mean_estimate,sd,ci_half_width,replicates,beta\n");
    let mut points = Vec::new();
    for (n, mean, sd, ci) in rows {
        let ci_text = ci.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{n},{mean},{sd},{ci_text},{},1", args.replicates);
        points.push(PlotPoint {
            x_axis_value: n,
            method: "modeiv_v5".into(),
            mean,
            ci,
        });
    }
    write(&dir.join("theorem.csv"), out.as_bytes())?;
    write(&dir.join("plot_data.csv"), &plot_csv(&points)?)?;
    Ok(())
}

pub fn run(args: ReproduceArgs, outdir: &Path, seed: u64) -> anyhow::Result<()> {
    args.validate()?;
    let dir = outdir.join(args.experiment.dir_name());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), &args)?;
    let seeds = args.seed_list(seed);
    let records = match args.experiment {
        Experiment::DemandBias => demand_bias(&args, &dir, &seeds)?,
        Experiment::MrTable => mr_table(&args, &dir, &seeds)?,
        Experiment::VSensitivity => v_sensitivity(&args, &dir, &seeds)?,
        Experiment::Theorem => {
            theorem(&args, &dir, seed)?;
            eprintln!("wrote {}", dir.join("theorem.csv").display());
            return Ok(());
        }
    };
    write(&dir.join("results.csv"), &results_csv(&records)?)?;
    let labels: std::collections::BTreeSet<String> = records.iter().map(labelled).collect();
    eprintln!(
        "wrote {} result rows ({} methods) under {}",
        records.len(),
        labels.len(),
        dir.display()
    );
    Ok(())
}
