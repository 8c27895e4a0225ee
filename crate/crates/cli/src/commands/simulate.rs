use std::path::Path;

use anyhow::Context;
use clap::{Args, Subcommand};
use modeiv::data::save_csv;
use modeiv::sim::{generate_demand, generate_mr, DemandConfig, MrConfig};
use serde::{Deserialize, Serialize};

use super::write_json;

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Biased demand design: price instrumented by k cost shifters.
    Demand(DemandArgs),
    /// Mendelian-randomization style design with K allele-count instruments.
    Mr(MrArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DemandArgs {
    /// Rows to draw.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,

    /// Number of instruments.
    #[arg(long, default_value_t = 8)]
    pub k: usize,

    /// The last n-invalid instruments get a direct effect on the outcome.
    #[arg(long, default_value_t = 0)]
    pub n_invalid: usize,

    /// Explicit valid instrument indices (0-based); overrides --n-invalid.
    #[arg(long, value_delimiter = ',')]
    pub valid: Vec<usize>,

    /// Scale of the exclusion violation.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,

    /// Confounding strength in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,

    /// Seed for structural coefficients; defaults to --seed.
    #[arg(long)]
    pub param_seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MrArgs {
    /// Rows to draw.
    #[arg(long, default_value_t = 50_000)]
    pub n: usize,

    /// Number of candidate instruments K.
    #[arg(long, default_value_t = 20)]
    pub k: usize,

    /// Instruments without pleiotropic effect; defaults to half of K.
    #[arg(long)]
    pub n_valid: Option<usize>,

    /// Weight of the confounder in the exposure.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,

    /// Seed for structural coefficients; defaults to --seed.
    #[arg(long)]
    pub param_seed: Option<u64>,
}

impl DemandArgs {
    pub fn config(&self, seed: u64) -> DemandConfig {
        let mut cfg = DemandConfig::with_invalid(self.k, self.n_invalid, self.gamma, self.n, seed);
        if !self.valid.is_empty() {
            cfg.valid_indices = self.valid.clone();
        }
        cfg.rho = self.rho;
        cfg.param_seed = self.param_seed.unwrap_or(seed);
        cfg
    }
}

impl MrArgs {
    pub fn config(&self, seed: u64) -> MrConfig {
        MrConfig {
            k: self.k,
            n_valid: self.n_valid.unwrap_or(self.k.div_ceil(2)),
            rho: self.rho,
            n: self.n,
            param_seed: self.param_seed.unwrap_or(seed),
            noise_seed: seed,
            ..MrConfig::default()
        }
    }
}

/// Writes `data.csv`, `truth.json` and the resolved `simulate.json`.
pub fn run(cmd: SimulateCommand, outdir: &Path, seed: u64) -> anyhow::Result<()> {
    let (data, truth) = match &cmd {
        SimulateCommand::Demand(args) => {
            if args.n_invalid > args.k && args.valid.is_empty() {
                anyhow::bail!("--n-invalid ({}) exceeds --k ({})", args.n_invalid, args.k);
            }
            let cfg = args.config(seed);
            let out = generate_demand(&cfg).context("simulate demand")?;
            write_json(&outdir.join("simulate.json"), &cfg)?;
            out
        }
        SimulateCommand::Mr(args) => {
            let cfg = args.config(seed);
            let out = generate_mr(&cfg).context("simulate mr")?;
            write_json(&outdir.join("simulate.json"), &cfg)?;
            out
        }
    };
    std::fs::create_dir_all(outdir)?;
    save_csv(&data, outdir.join("data.csv"))?;
    write_json(&outdir.join("truth.json"), &truth)?;
    eprintln!("wrote {} rows to {}", data.n(), outdir.join("data.csv").display());
    Ok(())
}
