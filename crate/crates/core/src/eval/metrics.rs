use statrs::distribution::{ContinuousCDF, StudentsT};

use super::grid::EvalGrid;
use crate::error::{Error, Result};
use crate::estimators::EffectFunction;
use crate::sim::TruthOracle;

/// Predictions on the grid, one vector over `grid.t` per grid row.
pub fn grid_predictions<F: EffectFunction + ?Sized>(f: &F, grid: &EvalGrid) -> Result<Vec<Vec<f64>>> {
    grid.rows.iter().map(|r| f.predict_along(&r.x, &r.z, &grid.t)).collect()
}

/// Noiseless truth on the grid, laid out like [`grid_predictions`].
pub fn grid_truth(truth: &TruthOracle, grid: &EvalGrid) -> Vec<Vec<f64>> {
    grid.rows
        .iter()
        .map(|r| grid.t.iter().map(|&t| truth.response(t, &r.x)).collect())
        .collect()
}

/// Mean squared difference between two row-by-treatment tables.
pub fn mse_tables(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (p, q) in pred.iter().zip(truth) {
        if p.len() != q.len() {
            return Err(Error::Dimension("prediction and truth tables differ in shape".into()));
        }
        for (a, b) in p.iter().zip(q) {
            acc += (a - b) * (a - b);
        }
        count += p.len();
    }
    if count == 0 || pred.len() != truth.len() {
        return Err(Error::Config("empty evaluation grid".into()));
    }
    Ok(acc / count as f64)
}

/// Mean squared error against the noiseless response over the treatment grid
/// crossed with the held-out rows.
pub fn mse_on_grid<F: EffectFunction + ?Sized>(f: &F, truth: &TruthOracle, grid: &EvalGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("empty evaluation grid".into()));
    }
    mse_tables(&grid_predictions(f, grid)?, &grid_truth(truth, grid))
}

/// Mean over rows of `|(f̂(t₂, x) - f̂(t₁, x)) / (t₂ - t₁) - β(x)|`, with
/// `at(row, t)` giving `f̂`.
pub fn slope_bias_with(
    rows: usize,
    probes: (f64, f64),
    mut at: impl FnMut(usize, f64) -> Result<f64>,
    mut slope: impl FnMut(usize) -> f64,
) -> Result<f64> {
    let (t1, t2) = probes;
    if t1 == t2 || !(t1.is_finite() && t2.is_finite()) {
        return Err(Error::Config(format!("slope probes must be distinct, got {t1} and {t2}")));
    }
    if rows == 0 {
        return Err(Error::Config("no rows to probe".into()));
    }
    let mut acc = 0.0;
    for r in 0..rows {
        let est = (at(r, t2)? - at(r, t1)?) / (t2 - t1);
        acc += (est - slope(r)).abs();
    }
    Ok(acc / rows as f64)
}

/// Conditional average treatment effect bias: finite-difference slope of
/// `f` between the probes, against the true slope, averaged over rows.
pub fn cate_abs_bias<F: EffectFunction + ?Sized>(
    f: &F,
    truth_slope: impl Fn(&[f64]) -> f64,
    grid: &EvalGrid,
    probes: (f64, f64),
) -> Result<f64> {
    let mut cache = Vec::with_capacity(grid.rows.len());
    for r in &grid.rows {
        cache.push(f.predict_along(&r.x, &r.z, &[probes.0, probes.1])?);
    }
    slope_bias_with(
        grid.rows.len(),
        probes,
        |r, t| Ok(if t == probes.0 { cache[r][0] } else { cache[r][1] }),
        |r| truth_slope(&grid.rows[r].x),
    )
}

/// Mean and Student-t half width `t_{(1+level)/2, n-1} · sd / √n`.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Config(format!("confidence interval needs at least 2 samples, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Config(e.to_string()))?;
    let q = dist.inverse_cdf(0.5 + level / 2.0);
    Ok((mean, q * var.sqrt() / (n as f64).sqrt()))
}
