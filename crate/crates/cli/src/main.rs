mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::simulate::SimulateCommand;
use commands::{evaluate, fit, reproduce, simulate};

/// Robust IV estimation by modal aggregation of per-instrument estimators.
#[derive(Debug, Parser)]
#[command(name = "modeiv", version, propagate_version = true)]
pub struct Cli {
    /// Seed for every random stream (data, parameters, splits, grids).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub outdir: PathBuf,

    /// TOML file with defaults; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset and its truth oracle from a simulator.
    #[command(subcommand)]
    Simulate(simulate::SimulateCommand),
    /// Fit one estimator per instrument on the training split.
    Fit(fit::FitArgs),
    /// Score methods against the truth oracle on a held-out grid.
    Evaluate(evaluate::EvaluateArgs),
    /// Run a full experiment sweep across seeds.
    Reproduce(reproduce::ReproduceArgs),
}

fn run(matches: &ArgMatches) -> anyhow::Result<()> {
    let mut cli = Cli::from_arg_matches(matches)?;
    let file = match &cli.config {
        Some(path) => Some(config::load(path)?),
        None => None,
    };
    if let Some(file) = &file {
        config::apply_globals(&mut cli, matches, file)?;
    }
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global()?;
    }
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match cli.command {
        Command::Simulate(cmd) => {
            let (kind, leaf) = sub.subcommand().expect("simulator required");
            let section = file.as_ref().and_then(|f| config::section(f, &["simulate", kind]));
            let cmd = match cmd {
                SimulateCommand::Demand(a) => SimulateCommand::Demand(config::merge(a, leaf, section)?),
                SimulateCommand::Mr(a) => SimulateCommand::Mr(config::merge(a, leaf, section)?),
            };
            simulate::run(cmd, &cli.outdir, cli.seed)
        }
        Command::Fit(args) => {
            let section = file.as_ref().and_then(|f| config::section(f, &[name]));
            fit::run(config::merge(args, sub, section)?, &cli.outdir, cli.seed)
        }
        Command::Evaluate(args) => {
            let section = file.as_ref().and_then(|f| config::section(f, &[name]));
            evaluate::run(config::merge(args, sub, section)?, &cli.outdir)
        }
        Command::Reproduce(args) => {
            let section = file.as_ref().and_then(|f| config::section(f, &[name]));
            reproduce::run(config::merge(args, sub, section)?, &cli.outdir, cli.seed)
        }
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
