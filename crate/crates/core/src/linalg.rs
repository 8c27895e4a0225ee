//! Least squares through a Householder QR of the design followed by an SVD of
//! the small triangular factor. Ridge shrinkage is applied on the singular
//! values, so `lambda = 0` gives the minimum-norm solution and any
//! `lambda > 0` stays well defined on collinear designs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// p × m, one column per right-hand side.
    pub coef: DMatrix<f64>,
    /// Residual sum of squares per right-hand side.
    pub rss: Vec<f64>,
    pub rank: usize,
}

/// Solves `min ||X b - Y||² + lambda ||b||²` column by column.
///
/// Fails with [`Error::Underdetermined`] when `X` has at least as many
/// columns as rows, and with [`Error::Singular`] when `lambda == 0` and `X`
/// is numerically rank deficient.
pub fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<LstsqSolution> {
    let sol = lstsq_min_norm(x, y, lambda)?;
    if lambda == 0.0 && sol.rank < x.ncols() {
        return Err(Error::Singular {
            rows: x.nrows(),
            cols: x.ncols(),
            rank: sol.rank,
        });
    }
    Ok(sol)
}

/// Like [`lstsq`], but with `lambda == 0` a rank-deficient design yields the
/// minimum-norm solution: singular values under the tolerance are dropped.
/// Fitted values are unique either way; callers check `rank` when the
/// coefficients themselves must be identified.
pub fn lstsq_min_norm(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<LstsqSolution> {
    let (n, p) = x.shape();
    if y.nrows() != n {
        return Err(Error::Dimension(format!("design has {n} rows, response has {}", y.nrows())));
    }
    if p == 0 {
        return Ok(LstsqSolution {
            coef: DMatrix::zeros(0, y.ncols()),
            rss: y.column_iter().map(|c| c.norm_squared()).collect(),
            rank: 0,
        });
    }
    if p >= n {
        return Err(Error::Underdetermined { rows: n, cols: p });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("ridge lambda must be finite and >= 0, got {lambda}")));
    }

    let qr = x.clone().qr();
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let c = qty.rows(0, p).into_owned();
    let r = qr.r();

    let svd = r.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Singular { rows: n, cols: p, rank: 0 }),
    };
    let s = svd.singular_values;
    let cutoff = RANK_TOLERANCE * s.max();
    let rank = s.iter().filter(|&&v| v > cutoff).count();
    let shrink: Vec<f64> = s
        .iter()
        .map(|&v| {
            if lambda == 0.0 {
                if v > cutoff {
                    1.0 / v
                } else {
                    0.0
                }
            } else {
                v / (v * v + lambda)
            }
        })
        .collect();

    let mut ut_c = u.transpose() * c;
    for (i, f) in shrink.iter().enumerate() {
        ut_c.row_mut(i).scale_mut(*f);
    }
    let coef = v_t.transpose() * ut_c;

    let resid = y - x * &coef;
    let rss = resid.column_iter().map(|c| c.norm_squared()).collect();
    Ok(LstsqSolution { coef, rss, rank })
}

/// Single right-hand-side convenience wrapper around [`lstsq`].
pub fn lstsq_vec(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let sol = lstsq(x, &DMatrix::from_column_slice(y.len(), 1, y), lambda)?;
    Ok((sol.coef.column(0).iter().copied().collect(), sol.rss[0]))
}

/// Builds an n × p design from a row generator that appends into a buffer.
pub fn design_from_rows(n: usize, p: usize, mut row: impl FnMut(usize, &mut Vec<f64>)) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, p);
    let mut buf = Vec::with_capacity(p);
    for i in 0..n {
        buf.clear();
        row(i, &mut buf);
        if buf.len() != p {
            return Err(Error::Dimension(format!("row {i} has {} features, expected {p}", buf.len())));
        }
        for (j, v) in buf.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with an `n - 1` denominator.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let (b, rss) = lstsq_vec(&x, &[1.0, 3.0, 5.0, 7.0], 0.0).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
        assert!(rss < 1e-20);
    }

    #[test]
    fn matches_normal_equations() {
        let x = DMatrix::from_fn(50, 3, |i, j| ((i * 7 + j * 13) % 11) as f64 + (j as f64) * 0.5);
        let y: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let (b, _) = lstsq_vec(&x, &y, 0.0).unwrap();
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * DMatrix::from_column_slice(50, 1, &y);
        let direct = xtx.lu().solve(&xty).unwrap();
        for j in 0..3 {
            assert!((b[j] - direct[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_matches_augmented_normal_equations() {
        let x = DMatrix::from_fn(30, 3, |i, j| ((i + 1) as f64).powi(j as i32 % 2) + (i * j) as f64 * 0.1);
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
        let lambda = 2.5;
        let (b, _) = lstsq_vec(&x, &y, lambda).unwrap();
        let a = x.transpose() * &x + DMatrix::identity(3, 3) * lambda;
        let rhs = x.transpose() * DMatrix::from_column_slice(30, 1, &y);
        let direct = a.lu().solve(&rhs).unwrap();
        for j in 0..3 {
            assert!((b[j] - direct[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_design_needs_ridge() {
        let x = DMatrix::from_fn(10, 3, |i, j| if j == 2 { 2.0 * i as f64 } else { [1.0, i as f64][j] });
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(lstsq_vec(&x, &y, 0.0), Err(Error::Singular { rank: 2, .. })));
        assert!(lstsq_vec(&x, &y, 1e-6).is_ok());
        let sol = lstsq_min_norm(&x, &DMatrix::from_column_slice(10, 1, &y), 0.0).unwrap();
        assert_eq!(sol.rank, 2);
        assert!(sol.rss[0] < 1e-20);
        // minimum norm splits the slope between the duplicated columns as 1:2
        assert!((sol.coef[(1, 0)] * 2.0 - sol.coef[(2, 0)]).abs() < 1e-9);
    }

    #[test]
    fn wide_design_rejected() {
        let x = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(lstsq_vec(&x, &[1.0, 2.0, 3.0], 1.0), Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert!((percentile(&v, 12.5) - 1.5).abs() < 1e-12);
    }
}
