use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use modeiv::data::{load_csv_auto, SplitSpec};
use modeiv::estimators::{fit_ensemble, Conditioning, EnsembleFitConfig, InstrumentFailure};
use modeiv::eval::{comparison_split, ComparisonConfig};
use modeiv::{EstimatorSpec, FittedEstimator};
use serde::{Deserialize, Serialize};

use super::{write, write_json, ConditioningArg, EstimatorArgs};

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Dataset CSV; defaults to <outdir>/data.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub estimator: EstimatorArgs,

    /// Instrument columns (0-based) to fit; all by default.
    #[arg(long, value_delimiter = ',')]
    pub instruments: Vec<usize>,

    /// How the other instruments enter each fit.
    #[arg(long, value_enum, default_value_t = ConditioningArg::Independent)]
    pub conditioning: ConditioningArg,

    /// Record failing instruments and keep going instead of exiting nonzero.
    #[arg(long)]
    pub skip_failed: bool,

    /// Share of rows used for fitting.
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,

    /// Share of rows held out for evaluation.
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
}

/// What `evaluate` needs to rebuild the same split and baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: EstimatorSpec,
    pub conditioning: Conditioning,
    pub split: SplitSpec,
    pub seed: u64,
    pub d: usize,
    pub k: usize,
    pub files: Vec<String>,
    pub failures: Vec<InstrumentFailure>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn estimator_file(j: usize) -> String {
    format!("estimator_z{}.json", j + 1)
}

pub fn comparison_config(manifest: &Manifest) -> ComparisonConfig {
    ComparisonConfig {
        conditioning: manifest.conditioning,
        train_fraction: manifest.split.train_fraction,
        validation_fraction: manifest.split.validation_fraction,
        ..ComparisonConfig::new(manifest.spec.clone(), manifest.seed)
    }
}

fn diagnostics_csv(estimators: &[FittedEstimator]) -> String {
    let mut out = String::from("instrument,n_train,first_stage_f,first_stage_resid_var,second_stage_resid_var\n");
    for e in estimators {
        let d = &e.diagnostics;
        let label: Vec<String> = e.instruments.iter().map(|j| format!("z_{}", j + 1)).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            label.join("+"),
            d.n_train,
            d.first_stage_f,
            d.first_stage_resid_var,
            d.second_stage_resid_var
        );
    }
    out
}

pub fn run(args: FitArgs, outdir: &Path, seed: u64) -> anyhow::Result<()> {
    let data_path = args.data.clone().unwrap_or_else(|| outdir.join("data.csv"));
    let data = load_csv_auto(&data_path).with_context(|| format!("loading {}", data_path.display()))?;
    let spec = args.estimator.spec();
    spec.validate()?;
    let manifest_base = Manifest {
        spec: spec.clone(),
        conditioning: args.conditioning.into(),
        split: SplitSpec {
            train_fraction: args.train_fraction,
            validation_fraction: args.validation_fraction,
            seed,
        },
        seed,
        d: data.d(),
        k: data.k(),
        files: Vec::new(),
        failures: Vec::new(),
    };
    let (train, _) = comparison_split(&data, &comparison_config(&manifest_base))?;

    let cfg = EnsembleFitConfig {
        spec,
        instruments: (!args.instruments.is_empty()).then(|| args.instruments.clone()),
        conditioning: args.conditioning.into(),
        // collect every failure so they can all be reported
        skip_failed: true,
    };
    let fit = fit_ensemble(&train, &cfg)?;
    if !fit.failures.is_empty() && !args.skip_failed {
        let lines: Vec<String> = fit
            .failures
            .iter()
            .map(|f| format!("  z_{}: {}", f.instrument + 1, f.error))
            .collect();
        bail!(
            "{} instrument(s) failed (use --skip-failed to drop them):\n{}",
            fit.failures.len(),
            lines.join("\n")
        );
    }

    let dir = outdir.join("ensemble");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::with_capacity(fit.estimators.len());
    for est in &fit.estimators {
        let name = estimator_file(est.instruments[0]);
        write(&dir.join(&name), est.to_json()?.as_bytes())?;
        files.push(name);
    }
    write(&dir.join("diagnostics.csv"), diagnostics_csv(&fit.estimators).as_bytes())?;
    for f in &fit.failures {
        eprintln!("skipped z_{}: {}", f.instrument + 1, f.error);
    }
    let manifest = Manifest {
        files,
        failures: fit.failures,
        ..manifest_base
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    eprintln!("wrote {} estimators to {}", manifest.files.len(), dir.display());
    Ok(())
}
