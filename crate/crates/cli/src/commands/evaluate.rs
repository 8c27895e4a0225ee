use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use modeiv::data::load_csv_auto;
use modeiv::eval::{
    build_grid, comparison_split, fit_joint, records_from, results_csv, ExperimentReport, GridSpec, Method,
    MethodResult, Scoring,
};
use modeiv::{FittedEstimator, TruthOracle};
use serde::{Deserialize, Serialize};

use super::fit::{comparison_config, Manifest, MANIFEST};
use super::{parse_range, read_json, write};

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Dataset CSV; defaults to <outdir>/data.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Truth file written by `simulate`; defaults to <outdir>/truth.json.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Directory written by `fit`; defaults to <outdir>/ensemble.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,

    /// Methods to score: modeiv, mean, naive, oracle, modeiv_v<V>, single_<j>.
    #[arg(long, value_delimiter = ',', default_value = "modeiv,mean,naive,oracle")]
    pub methods: Vec<String>,

    /// Interval size V for plain `modeiv`; defaults to max(2, ceil(k/2)).
    #[arg(long)]
    pub v: Option<usize>,

    /// Score modeiv at every V in the range, e.g. 2..8.
    #[arg(long)]
    pub v_sweep: Option<String>,

    /// Treatment grid size.
    #[arg(long, default_value_t = 1000)]
    pub grid_points: usize,

    /// Held-out covariate rows crossed with the grid.
    #[arg(long, default_value_t = 200)]
    pub x_sample: usize,
}

pub fn load_ensemble(dir: &Path) -> anyhow::Result<(Manifest, Vec<FittedEstimator>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let estimators = manifest
        .files
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            FittedEstimator::from_json(&text).with_context(|| format!("parsing {}", path.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((manifest, estimators))
}

fn methods(args: &EvaluateArgs) -> anyhow::Result<Vec<Method>> {
    let mut out = Vec::new();
    for name in &args.methods {
        let m: Method = name.trim().parse()?;
        match (m, args.v) {
            (Method::ModeIv { v: 0 }, Some(v)) => out.push(Method::ModeIv { v }),
            _ => out.push(m),
        }
    }
    if let Some(range) = &args.v_sweep {
        let (lo, hi) = parse_range(range)?;
        out.retain(|m| !matches!(m, Method::ModeIv { .. }));
        out.extend((lo..=hi).map(|v| Method::ModeIv { v }));
    }
    if out.is_empty() {
        bail!("no methods requested");
    }
    Ok(out)
}

/// Scores `methods` for a saved ensemble. The split, grid and baselines are
/// rebuilt from the manifest, so the numbers match an in-memory run.
pub fn score_saved(
    data_path: &Path,
    truth: &TruthOracle,
    ensemble_dir: &Path,
    methods: &[Method],
    grid: GridSpec,
) -> anyhow::Result<Vec<MethodResult>> {
    let data = load_csv_auto(data_path).with_context(|| format!("loading {}", data_path.display()))?;
    let (manifest, ensemble) = load_ensemble(ensemble_dir)?;
    if manifest.d != data.d() || manifest.k != data.k() {
        bail!(
            "schema mismatch: ensemble was fitted on d={}, k={} but {} has d={}, k={}",
            manifest.d,
            manifest.k,
            data_path.display(),
            data.d(),
            data.k()
        );
    }
    if truth.k() != data.k() {
        bail!("schema mismatch: truth has k={} but the dataset has k={}", truth.k(), data.k());
    }
    let cfg = modeiv::eval::ComparisonConfig {
        grid,
        ..comparison_config(&manifest)
    };
    let (train, held) = comparison_split(&data, &cfg)?;
    let built = build_grid(&cfg.grid, &train, &held, cfg.seed)?;
    let timed = |instruments: Vec<usize>, label: &str| -> anyhow::Result<(FittedEstimator, f64)> {
        let start = Instant::now();
        let est = fit_joint(&train, instruments, &cfg).with_context(|| label.to_string())?;
        Ok((est, start.elapsed().as_secs_f64()))
    };
    let naive = if methods.contains(&Method::NaiveAll) {
        Some(timed((0..data.k()).collect(), "naive_all")?)
    } else {
        None
    };
    let oracle = if methods.contains(&Method::OracleValid) {
        Some(timed(truth.valid_instruments().to_vec(), "oracle_valid")?)
    } else {
        None
    };
    let scoring = Scoring {
        truth,
        grid: built,
        seed: cfg.seed,
        ensemble,
        ensemble_secs: 0.0,
        failures: manifest.failures,
        naive,
        oracle,
    };
    Ok(scoring.score(methods)?)
}

pub fn truth_labels(truth: &TruthOracle) -> (Option<f64>, Option<usize>) {
    let n_invalid = Some(truth.k() - truth.valid_instruments().len());
    match truth {
        TruthOracle::Demand(d) => (Some(d.gamma), n_invalid),
        TruthOracle::Mr(_) => (None, n_invalid),
    }
}

pub fn run(args: EvaluateArgs, outdir: &Path) -> anyhow::Result<()> {
    let data_path = args.data.clone().unwrap_or_else(|| outdir.join("data.csv"));
    let truth_path = args.truth.clone().unwrap_or_else(|| outdir.join("truth.json"));
    let ensemble_dir = args.ensemble.clone().unwrap_or_else(|| outdir.join("ensemble"));
    let truth: TruthOracle = read_json(&truth_path)?;
    let methods = methods(&args)?;
    let grid = GridSpec {
        n_points: args.grid_points,
        x_sample: args.x_sample,
        ..GridSpec::default()
    };
    let results = score_saved(&data_path, &truth, &ensemble_dir, &methods, grid)?;
    let (gamma, n_invalid) = truth_labels(&truth);
    let records = records_from(&results, gamma, n_invalid);
    write(&outdir.join("results.csv"), &results_csv(&records)?)?;
    write(&outdir.join("report.csv"), &ExperimentReport::from_records(&records)?.to_csv()?)?;
    for r in &results {
        eprintln!("{:>16}  mse {:.5}  cate_abs_bias {:.5}", r.method.to_string(), r.mse, r.cate_abs_bias);
    }
    Ok(())
}
