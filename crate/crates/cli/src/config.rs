//! Optional TOML defaults. Top-level keys set the global flags; tables
//! `[simulate.demand]`, `[simulate.mr]`, `[fit]`, `[evaluate]` and
//! `[reproduce]` set subcommand flags, keyed by the flag name with `_` or
//! `-`. Anything given explicitly on the command line takes precedence.

use std::path::Path;

use anyhow::{bail, Context};
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::Cli;

pub fn load(path: &Path) -> anyhow::Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<Table>()
        .with_context(|| format!("parsing config {}", path.display()))
}

pub fn section<'a>(file: &'a Table, path: &[&str]) -> Option<&'a Table> {
    let mut table = file;
    for key in path {
        table = table.get(*key)?.as_table()?;
    }
    Some(table)
}

fn from_cli(matches: &ArgMatches, id: &str) -> bool {
    matches!(matches.value_source(id), Some(ValueSource::CommandLine))
}

pub fn apply_globals(cli: &mut Cli, matches: &ArgMatches, file: &Table) -> anyhow::Result<()> {
    // global flags may be given after the subcommand, so look at every level
    let mut levels = vec![matches];
    let mut m = matches;
    while let Some((_, sub)) = m.subcommand() {
        levels.push(sub);
        m = sub;
    }
    let explicit = |id: &str| levels.iter().any(|m| from_cli(m, id));
    if let Some(v) = file.get("seed") {
        if !explicit("seed") {
            cli.seed = v.clone().try_into().context("config: seed must be a non-negative integer")?;
        }
    }
    if let Some(v) = file.get("jobs") {
        if !explicit("jobs") {
            cli.jobs = v.clone().try_into().context("config: jobs must be a non-negative integer")?;
        }
    }
    if let Some(v) = file.get("outdir") {
        if !explicit("outdir") {
            cli.outdir = v.as_str().context("config: outdir must be a string")?.into();
        }
    }
    Ok(())
}

/// Overlays `section` onto `args` for every field not set on the command
/// line.
pub fn merge<T: Serialize + DeserializeOwned>(args: T, matches: &ArgMatches, section: Option<&Table>) -> anyhow::Result<T> {
    let Some(section) = section else {
        return Ok(args);
    };
    let mut table = match Value::try_from(&args).context("serializing arguments")? {
        Value::Table(t) => t,
        _ => bail!("arguments did not serialize to a table"),
    };
    for (key, value) in section {
        if value.is_table() {
            continue;
        }
        let id = key.replace('-', "_");
        let known = matches.ids().any(|i| i.as_str() == id);
        if !known {
            bail!("config: unknown key '{key}'");
        }
        if !from_cli(matches, &id) {
            table.insert(id, value.clone());
        }
    }
    Value::Table(table)
        .try_into()
        .context("config values do not match the expected flag types")
}
