use super::{columns, first_stage, second_stage, Diagnostics, EstimatorSpec, Model, TrainingView};
use crate::basis::{CovariateBasis, Expansion1d};
use crate::error::{Error, Result};
use crate::linalg::design_from_rows;

/// Series IV. Treatment features `b(t) = [t, …, t^q, bumps]` are each
/// regressed on `[ψ(w), a(z_S)]` where `a` expands every selected instrument
/// the same way; the outcome is then regressed on `[ψ(w), b̂]`.
///
/// With `q = 1`, no bumps and no smooth covariates this is exactly linear
/// 2SLS.
pub(super) fn fit(view: &TrainingView<'_>, spec: &EstimatorSpec) -> Result<(Vec<Vec<f64>>, Model, Diagnostics)> {
    let data = view.data;
    let n = data.n();
    let lambda = spec.lambda(n);
    let degree = spec.basis.degree;
    let bumps = spec.basis.bumps;
    let covariates = CovariateBasis::fit(view.width(), &spec.basis, false, |c| view.column(c))?;
    let treatment = Expansion1d::fit(data.t(), degree, bumps, false);
    let instruments: Vec<Expansion1d> = view
        .target
        .instruments
        .iter()
        .map(|&j| Expansion1d::fit(&data.z_col(j), degree, bumps, false))
        .collect();
    let p = covariates.len();
    let r = treatment.len();
    let a_len: usize = instruments.iter().map(Expansion1d::len).sum();
    if p + a_len >= n || p + r >= n {
        return Err(Error::Underdetermined {
            rows: n,
            cols: p + a_len.max(r),
        });
    }

    let psi: Vec<Vec<f64>> = (0..n).map(|i| covariates.eval(&view.row(i))).collect::<Result<_>>()?;
    let restricted = design_from_rows(n, p, |i, out| out.extend_from_slice(&psi[i]))?;
    let full = design_from_rows(n, p + a_len, |i, out| {
        out.extend_from_slice(&psi[i]);
        for (slot, e) in instruments.iter().enumerate() {
            e.push(view.instrument(i, slot), out);
        }
    })?;
    let targets = design_from_rows(n, r, |i, out| treatment.push(data.t()[i], out))?;
    let stage1 = first_stage(&restricted, &full, &targets, lambda, view.target, spec.weak_instrument_threshold)?;

    let second = design_from_rows(n, p + r, |i, out| {
        out.extend_from_slice(&psi[i]);
        out.extend(stage1.fitted.row(i).iter());
    })?;
    let coef = second_stage(&second, data.y(), lambda, stage1.restricted_rank, r)?;
    let model = Model::Sieve {
        treatment,
        covariates,
        treatment_coef: coef[p..].to_vec(),
        covariate_coef: coef[..p].to_vec(),
    };
    let diag = Diagnostics {
        n_train: n,
        first_stage_f: stage1.f_stat,
        first_stage_resid_var: stage1.resid_var,
        second_stage_resid_var: 0.0,
    };
    Ok((columns(&stage1.coef), model, diag))
}
