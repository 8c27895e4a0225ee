use nalgebra::DMatrix;

use super::{columns, first_stage, second_stage, Diagnostics, EstimatorSpec, Model, TrainingView};
use crate::error::Result;
use crate::linalg::design_from_rows;

pub(super) fn fit(view: &TrainingView<'_>, spec: &EstimatorSpec) -> Result<(Vec<Vec<f64>>, Model, Diagnostics)> {
    let data = view.data;
    let n = data.n();
    let width = view.width();
    let q = view.target.instruments.len();
    let lambda = spec.lambda(n);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| view.row(i)).collect();

    let restricted = design_from_rows(n, 1 + width, |i, out| {
        out.push(1.0);
        out.extend_from_slice(&rows[i]);
    })?;
    let full = design_from_rows(n, 1 + width + q, |i, out| {
        out.push(1.0);
        out.extend_from_slice(&rows[i]);
        out.extend((0..q).map(|s| view.instrument(i, s)));
    })?;
    let t = DMatrix::from_column_slice(n, 1, data.t());
    let stage1 = first_stage(&restricted, &full, &t, lambda, view.target, spec.weak_instrument_threshold)?;

    let second = design_from_rows(n, 2 + width, |i, out| {
        out.push(1.0);
        out.extend_from_slice(&rows[i]);
        out.push(stage1.fitted[(i, 0)]);
    })?;
    let coef = second_stage(&second, data.y(), lambda, stage1.restricted_rank, 1)?;
    let model = Model::Linear {
        intercept: coef[0],
        covariates: coef[1..1 + width].to_vec(),
        slope: coef[1 + width],
    };
    let diag = Diagnostics {
        n_train: n,
        first_stage_f: stage1.f_stat,
        first_stage_resid_var: stage1.resid_var,
        second_stage_resid_var: 0.0,
    };
    Ok((columns(&stage1.coef), model, diag))
}

#[cfg(test)]
mod tests {
    use crate::data::{Dataset, TestPoint};
    use crate::error::Error;
    use crate::estimators::*;
    use crate::linalg::covariance;
    use crate::sim::normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// y = 2t + u + e_y, t = z + u + e_t, one covariate w independent of all.
    fn confounded(n: usize, seed: u64, rho: f64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut y, mut t, mut x, mut z) = (vec![], vec![], vec![], vec![]);
        for _ in 0..n {
            let zi = normal(&mut rng);
            let u = rho * normal(&mut rng);
            let w = normal(&mut rng);
            let ti = zi + u + normal(&mut rng);
            y.push(2.0 * ti + 0.5 * w + u + normal(&mut rng));
            t.push(ti);
            x.push(w);
            z.push(zi);
        }
        Dataset::new(y, t, x, 1, z, 1).unwrap()
    }

    fn slope(e: &FittedEstimator) -> f64 {
        match e.model {
            Model::Linear { slope, .. } => slope,
            _ => unreachable!(),
        }
    }

    #[test]
    fn matches_iv_ratio_without_covariates() {
        let data = confounded(2000, 1, 1.0);
        let no_x = Dataset::new(data.y().to_vec(), data.t().to_vec(), vec![], 0, data.z_col(0), 1).unwrap();
        let fit = fit_linear_tsls(&no_x, 0, &EstimatorSpec::linear()).unwrap();
        let z = no_x.z_col(0);
        let ratio = covariance(no_x.y(), &z) / covariance(no_x.t(), &z);
        assert!((slope(&fit) - ratio).abs() < 1e-8);
    }

    #[test]
    fn recovers_effect_under_confounding() {
        let data = confounded(100_000, 2, 1.0);
        let fit = fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap();
        let z = data.z_col(0);
        let ratio = covariance(data.y(), &z) / covariance(data.t(), &z);
        assert!((slope(&fit) - 2.0).abs() < 0.05, "{}", slope(&fit));
        assert!((ratio - 2.0).abs() < 0.05);
    }

    #[test]
    fn agrees_with_ols_without_confounding() {
        let data = confounded(20_000, 3, 0.0);
        let fit = fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap();
        // OLS slope of y on [1, w, t] and its standard error
        let design = crate::linalg::design_from_rows(data.n(), 3, |i, out| {
            out.extend_from_slice(&[1.0, data.x_row(i)[0], data.t()[i]])
        })
        .unwrap();
        let (b, rss) = crate::linalg::lstsq_vec(&design, data.y(), 0.0).unwrap();
        let sigma2 = rss / (data.n() - 3) as f64;
        let xtx_inv = (design.transpose() * &design).try_inverse().unwrap();
        let se = (sigma2 * xtx_inv[(2, 2)]).sqrt();
        let iv_se = se * 2.0f64.sqrt(); // first stage R² ≈ 1/2
        assert!((slope(&fit) - b[2]).abs() < 3.0 * iv_se, "{} vs {}", slope(&fit), b[2]);
    }

    #[test]
    fn constant_instrument_is_weak() {
        let data = confounded(500, 4, 1.0);
        let flat = Dataset::new(data.y().to_vec(), data.t().to_vec(), data.x_col(0), 1, vec![3.0; 500], 1).unwrap();
        match fit_linear_tsls(&flat, 0, &EstimatorSpec::linear()) {
            Err(Error::WeakInstrument { instrument: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scaling_outcome_scales_slope() {
        let data = confounded(3000, 5, 1.0);
        let scaled_y: Vec<f64> = data.y().iter().map(|v| v * 4.0).collect();
        let scaled = Dataset::new(scaled_y, data.t().to_vec(), data.x_col(0), 1, data.z_col(0), 1).unwrap();
        let a = slope(&fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap());
        let b = slope(&fit_linear_tsls(&scaled, 0, &EstimatorSpec::linear()).unwrap());
        assert!((b - 4.0 * a).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn first_stage_f_invariant_to_affine_instrument_rescaling() {
        let data = confounded(3000, 6, 1.0);
        let z2: Vec<f64> = data.z_col(0).iter().map(|v| -3.0 * v + 7.0).collect();
        let moved = Dataset::new(data.y().to_vec(), data.t().to_vec(), data.x_col(0), 1, z2, 1).unwrap();
        let f1 = fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap().diagnostics.first_stage_f;
        let f2 = fit_linear_tsls(&moved, 0, &EstimatorSpec::linear()).unwrap().diagnostics.first_stage_f;
        assert!((f1 - f2).abs() < 1e-6 * f1, "{f1} {f2}");
    }

    #[test]
    fn prediction_arithmetic() {
        let data = confounded(200, 7, 1.0);
        let mut fit = fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap();
        fit.model = Model::Linear {
            intercept: 1.0,
            covariates: vec![0.0],
            slope: 2.0,
        };
        let p = TestPoint::new(3.0, vec![0.0]);
        assert_eq!(predict(&fit, &p).unwrap(), 7.0);
        assert_eq!(predict(&fit, &p).unwrap(), predict(&fit, &p).unwrap());
        assert!(predict(&fit, &TestPoint::new(3.0, vec![])).is_err());
    }
}
