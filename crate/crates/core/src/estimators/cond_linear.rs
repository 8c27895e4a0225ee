use nalgebra::DMatrix;

use super::{columns, first_stage, second_stage, Diagnostics, EstimatorSpec, Model, TrainingView};
use crate::basis::CovariateBasis;
use crate::error::Result;
use crate::linalg::design_from_rows;

/// Stage 1 regresses `t` on `[φ(w), z_S ⊗ s(w)]`, where `s` is the smooth
/// block of `φ`; stage 2 regresses `y` on `[φ(w), t̂ · φ(w)]`.
pub(super) fn fit(view: &TrainingView<'_>, spec: &EstimatorSpec) -> Result<(Vec<Vec<f64>>, Model, Diagnostics)> {
    let data = view.data;
    let n = data.n();
    let lambda = spec.lambda(n);
    let basis = CovariateBasis::fit(view.width(), &spec.basis, true, |c| view.column(c))?;
    let p = basis.len();
    let s_len = basis.smooth_len();
    let q = view.target.instruments.len();

    let mut phi = Vec::with_capacity(n);
    let mut smooth = Vec::with_capacity(n);
    for i in 0..n {
        let w = view.row(i);
        phi.push(basis.eval(&w)?);
        let mut s = Vec::with_capacity(s_len);
        basis.push_smooth(&w, &mut s);
        smooth.push(s);
    }

    let restricted = design_from_rows(n, p, |i, out| out.extend_from_slice(&phi[i]))?;
    let full = design_from_rows(n, p + q * s_len, |i, out| {
        out.extend_from_slice(&phi[i]);
        for slot in 0..q {
            let z = view.instrument(i, slot);
            out.extend(smooth[i].iter().map(|s| z * s));
        }
    })?;
    let t = DMatrix::from_column_slice(n, 1, data.t());
    let stage1 = first_stage(&restricted, &full, &t, lambda, view.target, spec.weak_instrument_threshold)?;

    let second = design_from_rows(n, 2 * p, |i, out| {
        out.extend_from_slice(&phi[i]);
        let th = stage1.fitted[(i, 0)];
        out.extend(phi[i].iter().map(|v| th * v));
    })?;
    let coef = second_stage(&second, data.y(), lambda, stage1.restricted_rank, stage1.restricted_rank)?;
    let model = Model::CondLinear {
        basis,
        h: coef[..p].to_vec(),
        g: coef[p..].to_vec(),
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
    use crate::basis::BasisSpec;
    use crate::data::{split, SplitSpec, TestPoint};
    use crate::estimators::*;
    use crate::sim::{generate_mr, MrConfig, TruthOracle};

    fn mr(n: usize, k: usize, n_valid: usize, seed: u64) -> (crate::data::Dataset, TruthOracle) {
        generate_mr(&MrConfig {
            n,
            k,
            n_valid,
            param_seed: seed,
            noise_seed: seed,
            ..MrConfig::default()
        })
        .unwrap()
    }

    fn slope_mae(est: &FittedEstimator, held: &crate::data::Dataset, truth: &TruthOracle) -> f64 {
        (0..held.n())
            .map(|i| (est.slope_at(held.x_row(i), held.z_row(i)).unwrap() - truth.slope(held.x_row(i))).abs())
            .sum::<f64>()
            / held.n() as f64
    }

    #[test]
    fn prediction_matches_coefficients() {
        let (data, _) = mr(3000, 4, 4, 1);
        let est = fit_cond_linear(&data, 0, &EstimatorSpec::cond_linear(BasisSpec::polynomial(1))).unwrap();
        let Model::CondLinear { h, g, .. } = &est.model else { unreachable!() };
        for i in 0..20 {
            let x = data.x_row(i);
            let phi: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
            let t = data.t()[i] * 1.7 - 0.3;
            let external = dot(&phi, h) + t * dot(&phi, g);
            let got = est.predict(&TestPoint::new(t, x.to_vec())).unwrap();
            assert!((got - external).abs() < 1e-12);
        }
    }

    #[test]
    fn average_slope_tracks_linear_tsls() {
        let (data, _) = mr(20_000, 2, 2, 3);
        let cl = fit_cond_linear(&data, 0, &EstimatorSpec::cond_linear(BasisSpec::polynomial(1))).unwrap();
        let lin = fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap();
        let Model::Linear { slope, .. } = lin.model else { unreachable!() };
        // The slope function averaged over covariates equals the homogeneous 2SLS slope up to noise.
        let avg: f64 = (0..2000).map(|i| cl.slope_at(data.x_row(i), &[]).unwrap()).sum::<f64>() / 2000.0;
        assert!((avg - slope).abs() < 0.1, "{avg} vs {slope}");
    }

    #[test]
    fn slope_function_recovered_with_valid_instrument() {
        let (data, truth) = mr(100_000, 2, 2, 5);
        let (train, held, _) = split(&data, &SplitSpec::train_validation(5)).unwrap();
        let held = held.unwrap();
        let est = fit_cond_linear(&train, 0, &EstimatorSpec::cond_linear(BasisSpec::polynomial(1))).unwrap();
        let mae = slope_mae(&est, &held, &truth);
        assert!(mae < 0.05, "mae {mae}");
    }

    #[test]
    fn invalid_instrument_biases_slope() {
        let (data, truth) = mr(100_000, 2, 1, 6);
        let (train, held, _) = split(&data, &SplitSpec::train_validation(6)).unwrap();
        let held = held.unwrap();
        let spec = EstimatorSpec::cond_linear(BasisSpec::polynomial(1));
        let valid = slope_mae(&fit_cond_linear(&train, 0, &spec).unwrap(), &held, &truth);
        let invalid = slope_mae(&fit_cond_linear(&train, 1, &spec).unwrap(), &held, &truth);
        assert!(invalid > valid, "valid {valid} invalid {invalid}");
    }
}
