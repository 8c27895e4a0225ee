//! Tabular data shared by every other module: outcome `y`, treatment `t`,
//! covariates `x` (n × d) and candidate instruments `z` (n × k).
//!
//! Storage is row-major. A [`Dataset`] is immutable once built and rejects
//! non-finite values at construction, so downstream algebra never has to
//! re-check its inputs.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    d: usize,
    k: usize,
    x_names: Vec<String>,
    z_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major `x` (n·d values) and `z` (n·k values)
    /// with the default column names `x_1..x_d`, `z_1..z_k`.
    pub fn new(y: Vec<f64>, t: Vec<f64>, x: Vec<f64>, d: usize, z: Vec<f64>, k: usize) -> Result<Self> {
        let x_names = (1..=d).map(|i| format!("x_{i}")).collect();
        let z_names = (1..=k).map(|i| format!("z_{i}")).collect();
        Self::with_names(y, t, x, z, x_names, z_names)
    }

    pub fn with_names(
        y: Vec<f64>,
        t: Vec<f64>,
        x: Vec<f64>,
        z: Vec<f64>,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let d = x_names.len();
        let k = z_names.len();
        if n == 0 {
            return Err(Error::Config("dataset must have at least one row".into()));
        }
        if k == 0 {
            return Err(Error::Config("dataset must have at least one instrument".into()));
        }
        if t.len() != n {
            return Err(Error::Dimension(format!("t has {} rows, y has {n}", t.len())));
        }
        if x.len() != n * d {
            return Err(Error::Dimension(format!("x has {} values, expected {n}x{d}", x.len())));
        }
        if z.len() != n * k {
            return Err(Error::Dimension(format!("z has {} values, expected {n}x{k}", z.len())));
        }
        check_finite("y", &y, 1)?;
        check_finite("t", &t, 1)?;
        check_finite("x", &x, d)?;
        check_finite("z", &z, k)?;
        Ok(Self {
            y,
            t,
            x,
            z,
            d,
            k,
            x_names,
            z_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }

    pub fn z_col(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.z[i * self.k + j]).collect()
    }

    pub fn x_col(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.x[i * self.d + j]).collect()
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut y = Vec::with_capacity(indices.len());
        let mut t = Vec::with_capacity(indices.len());
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut z = Vec::with_capacity(indices.len() * self.k);
        for &i in indices {
            if i >= self.n() {
                return Err(Error::Dimension(format!("row {i} out of range for n={}", self.n())));
            }
            y.push(self.y[i]);
            t.push(self.t[i]);
            x.extend_from_slice(self.x_row(i));
            z.extend_from_slice(self.z_row(i));
        }
        Self::with_names(y, t, x, z, self.x_names.clone(), self.z_names.clone())
    }

    /// The `i`-th row as a test point carrying its instrument values.
    pub fn point(&self, i: usize) -> TestPoint {
        TestPoint {
            t: self.t[i],
            x: self.x_row(i).to_vec(),
            z: self.z_row(i).to_vec(),
        }
    }
}

fn check_finite(field: &'static str, values: &[f64], width: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite {
            field,
            row: pos / width.max(1),
        }),
        None => Ok(()),
    }
}

/// A location `(t, x)` at which effect functions are evaluated.
///
/// `z` holds the observed instrument values of the row the covariates came
/// from. Only estimators that condition on other instruments read it; it may
/// be empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
}

impl TestPoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x, z: Vec::new() }
    }

    pub fn with_instruments(t: f64, x: Vec<f64>, z: Vec<f64>) -> Self {
        Self { t, x, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// 90% train / 10% validation, no test rows.
    pub fn train_validation(seed: u64) -> Self {
        Self {
            train_fraction: 0.9,
            validation_fraction: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let SplitSpec {
            train_fraction: tr,
            validation_fraction: va,
            ..
        } = *self;
        if !(tr > 0.0 && tr <= 1.0) {
            return Err(Error::Config(format!("train_fraction {tr} outside (0, 1]")));
        }
        if !(0.0..1.0).contains(&va) {
            return Err(Error::Config(format!("validation_fraction {va} outside [0, 1)")));
        }
        if tr + va > 1.0 + 1e-12 {
            return Err(Error::Config(format!("fractions sum to {} > 1", tr + va)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded row partition behind [`split`].
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let part = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
    let n_train = part(spec.train_fraction);
    let n_val = part(spec.validation_fraction);
    if n_train == 0 || (spec.validation_fraction > 0.0 && n_val == 0) {
        return Err(Error::Config(format!("n={n} too small for split {spec:?}")));
    }
    let n_val = n_val.min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(spec.seed));
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(SplitIndices {
        train: order,
        validation,
        test,
    })
}

/// Splits into (train, validation, test). Parts with no rows are `None`.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Option<Dataset>, Option<Dataset>)> {
    let idx = split_indices(data.n(), spec)?;
    let part = |rows: &[usize]| -> Result<Option<Dataset>> {
        if rows.is_empty() {
            Ok(None)
        } else {
            data.subset(rows).map(Some)
        }
    };
    Ok((data.subset(&idx.train)?, part(&idx.validation)?, part(&idx.test)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Y,
    T,
    X,
    Z,
    Ignore,
}

/// Maps CSV header names to roles. `x` and `z` columns keep file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub roles: BTreeMap<String, ColumnRole>,
}

impl Schema {
    pub fn new<I, S>(roles: I) -> Self
    where
        I: IntoIterator<Item = (S, ColumnRole)>,
        S: Into<String>,
    {
        Self {
            roles: roles.into_iter().map(|(s, r)| (s.into(), r)).collect(),
        }
    }

    /// Derives roles from the canonical header `y,t,x_*,z_*`; anything else is ignored.
    pub fn from_header(header: &[&str]) -> Self {
        Self::new(header.iter().map(|&h| {
            let role = match h {
                "y" => ColumnRole::Y,
                "t" => ColumnRole::T,
                _ if h.starts_with("x_") => ColumnRole::X,
                _ if h.starts_with("z_") => ColumnRole::Z,
                _ => ColumnRole::Ignore,
            };
            (h.to_string(), role)
        }))
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let mut seen = HashSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        if !schema.roles.contains_key(name) {
            return Err(Error::Schema(format!("column `{name}` has no role in the schema")));
        }
    }
    for name in schema.roles.keys() {
        if !seen.contains(name.as_str()) {
            return Err(Error::Schema(format!("schema column `{name}` missing from {}", path.display())));
        }
    }
    let with_role = |role: ColumnRole| -> Vec<usize> {
        header
            .iter()
            .enumerate()
            .filter(|(_, h)| schema.roles[*h] == role)
            .map(|(i, _)| i)
            .collect()
    };
    let single = |role: ColumnRole, label: &str| -> Result<usize> {
        match with_role(role).as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::Schema(format!("no `{label}` column"))),
            _ => Err(Error::Schema(format!("more than one `{label}` column"))),
        }
    };
    let y_col = single(ColumnRole::Y, "y")?;
    let t_col = single(ColumnRole::T, "t")?;
    let x_cols = with_role(ColumnRole::X);
    let z_cols = with_role(ColumnRole::Z);

    let (mut y, mut t, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            let value: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: header[col].clone(),
                message: format!("`{raw}` is not a number"),
            })?;
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::Parse {
                    row,
                    column: header[col].clone(),
                    message: format!("non-finite value `{raw}`"),
                })
            }
        };
        y.push(cell(y_col)?);
        t.push(cell(t_col)?);
        for &c in &x_cols {
            x.push(cell(c)?);
        }
        for &c in &z_cols {
            z.push(cell(c)?);
        }
    }
    let names = |cols: &[usize]| cols.iter().map(|&c| header[c].clone()).collect();
    Dataset::with_names(y, t, x, z, names(&x_cols), names(&z_cols))
}

/// Loads a file written by [`save_csv`], deriving the schema from its header.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    load_csv(path, &Schema::from_header(&refs))
}

/// Writes the canonical `y,t,x_1..x_d,z_1..z_k` layout. Values use the
/// shortest decimal representation that parses back to the same `f64`.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(data.n() * (2 + data.d() + data.k()) * 12);
    out.push_str("y,t");
    for i in 1..=data.d() {
        out.push_str(&format!(",x_{i}"));
    }
    for i in 1..=data.k() {
        out.push_str(&format!(",z_{i}"));
    }
    out.push('\n');
    for i in 0..data.n() {
        out.push_str(&format!("{},{}", data.y[i], data.t[i]));
        for v in data.x_row(i).iter().chain(data.z_row(i)) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes to a sibling temp file then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
