//! End-to-end acceptance checks. Each criterion prints one line
//! `criterion N: PASS|FAIL ...`; the process exits non-zero if any fails.

use std::time::{Duration, Instant};

use modeiv::basis::BasisSpec;
use modeiv::data::{load_csv_auto, save_csv};
use modeiv::eval::{records_from, results_csv, run_comparison, sensitivity_sweep, ComparisonConfig, Method, MethodResult};
use modeiv::estimators::{fit_linear_tsls, fit_sieve, Conditioning, EstimatorSpec, Model};
use modeiv::linalg::{mean, variance};
use modeiv::modal::{shortest_interval, AggregationConfig};
use modeiv::sim::{generate_demand, generate_mr, DemandConfig, MrConfig, TruthOracle};
use modeiv::theorem::{shape_moments, simulate_theorem, SyntheticEstimatorSpec};
use modeiv::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed.as_secs_f64() < limit_secs as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mse_of(results: &[MethodResult], m: Method) -> f64 {
    results.iter().find(|r| r.method == m).expect("method scored").mse
}

fn bias_of(results: &[MethodResult], m: Method) -> f64 {
    results.iter().find(|r| r.method == m).expect("method scored").cate_abs_bias
}

/// Minimum width over all size-`v` subsets.
fn subset_min_width(values: &[f64], v: usize) -> f64 {
    let k = values.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize == v {
            let (lo, hi) = (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), i| (a.min(values[i]), b.max(values[i])));
            best = best.min(hi - lo);
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut failures = 0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=15);
        let v = rng.random_range(2..=k);
        // mix of continuous values and coarse ties
        let values: Vec<f64> = (0..k)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(-4..4) as f64 * 0.5
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect();
        let m = shortest_interval(&values, v).unwrap();
        let closed = (0..k).all(|i| (values[i] >= m.lower && values[i] <= m.upper) == m.members.contains(&i));
        if m.width() != subset_min_width(&values, v) || !closed || m.members.len() < v {
            failures += 1;
        }
    }
    let t = start.elapsed();
    check(failures == 0 && within(t, 10), format!("{failures}/1000 mismatches, {:.2}s", t.as_secs_f64()))
}

fn theorem_spec(n: f64, seed: u64) -> SyntheticEstimatorSpec {
    SyntheticEstimatorSpec::with_invalid(1.0, 5, &[2.0, 3.0, 4.0, 5.0], n, seed)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let cfg = AggregationConfig::with_v(5);
    let a = simulate_theorem(&theorem_spec(1e6, 11), &cfg, 500).unwrap();
    let b = simulate_theorem(&theorem_spec(4e6, 12), &cfg, 500).unwrap();
    let err = (mean(&a) - 1.0).abs();
    let ratio = variance(&b) / variance(&a);
    let t = start.elapsed();
    check(
        err < 0.01 && (0.15..=0.4).contains(&ratio) && within(t, 30),
        format!("|mean-1|={err:.2e}, var(4n)/var(n)={ratio:.3}, {:.2}s", t.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let est = simulate_theorem(&theorem_spec(1e6, 13), &AggregationConfig::with_v(5), 2000).unwrap();
    let (m, sd) = (mean(&est), variance(&est).sqrt());
    let z: Vec<f64> = est.iter().map(|v| (v - m) / sd).collect();
    let (skew, kurt) = shape_moments(&z);
    check(
        skew.abs() < 0.2 && kurt.abs() < 0.5,
        format!("skewness={skew:.3}, excess kurtosis={kurt:.3}"),
    )
}

fn demand_methods() -> Vec<Method> {
    vec![Method::ModeIv { v: 4 }, Method::MeanEnsemble, Method::NaiveAll, Method::OracleValid]
}

fn demand_config(seed: u64) -> ComparisonConfig {
    // every instrument moves price, so each estimator conditions on the rest
    ComparisonConfig {
        conditioning: Conditioning::LeaveOneOut,
        ..ComparisonConfig::new(EstimatorSpec::cond_linear(BasisSpec::demand()), seed)
    }
}

fn demand_run(n_invalid: usize, gamma: f64, seed: u64) -> Vec<MethodResult> {
    let (data, truth) = generate_demand(&DemandConfig::with_invalid(8, n_invalid, gamma, 10_000, seed)).unwrap();
    run_comparison(&data, &truth, &demand_methods(), &demand_config(seed)).unwrap()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let biased: Vec<Vec<MethodResult>> = SEEDS.iter().map(|&s| demand_run(3, 1.0, s)).collect();
    let clean: Vec<Vec<MethodResult>> = SEEDS.iter().map(|&s| demand_run(0, 0.0, s)).collect();
    let med = |runs: &[Vec<MethodResult>], m: Method| median(runs.iter().map(|r| mse_of(r, m)).collect());
    let [mode, mean_e, naive, oracle] = [0, 1, 2, 3].map(|i| med(&biased, demand_methods()[i]));
    let clean_meds: Vec<f64> = demand_methods().into_iter().map(|m| med(&clean, m)).collect();
    let spread = clean_meds.iter().cloned().fold(0.0, f64::max) / clean_meds.iter().cloned().fold(f64::INFINITY, f64::min);
    let t = start.elapsed();
    check(
        mode <= 1.5 * oracle && mode <= 0.5 * naive && spread <= 2.0 && within(t, 600),
        format!(
            "median MSE gamma=1: modeiv={mode:.4} mean={mean_e:.4} naive={naive:.4} oracle={oracle:.4}; \
             gamma=0 max/min={spread:.2}; {:.0}s",
            t.as_secs_f64()
        ),
    )
}

fn mr_data(n: usize, seed: u64) -> (Dataset, TruthOracle) {
    generate_mr(&MrConfig {
        k: 20,
        n_valid: 10,
        n,
        param_seed: seed,
        noise_seed: seed,
        ..MrConfig::default()
    })
    .unwrap()
}

fn mr_methods() -> Vec<Method> {
    vec![Method::ModeIv { v: 10 }, Method::MeanEnsemble, Method::NaiveAll, Method::OracleValid]
}

fn mr_config(seed: u64) -> ComparisonConfig {
    // draws from unif(0.01, 0.2) leave a few instruments below F = 10
    ComparisonConfig {
        skip_failed: true,
        ..ComparisonConfig::new(EstimatorSpec::cond_linear(BasisSpec::polynomial(1)), seed)
    }
}

fn mr_runs() -> Vec<Vec<MethodResult>> {
    SEEDS
        .iter()
        .map(|&s| {
            let (data, truth) = mr_data(50_000, s);
            run_comparison(&data, &truth, &mr_methods(), &mr_config(s)).unwrap()
        })
        .collect()
}

fn criterion_5(runs: &[Vec<MethodResult>], elapsed: Duration) -> Outcome {
    let mut good = 0;
    let mut lines = Vec::new();
    for r in runs {
        let [mode, mean_e, naive, oracle] = [0, 1, 2, 3].map(|i| mse_of(r, mr_methods()[i]));
        if mode <= mean_e && mean_e < naive && mode <= 2.0 * oracle {
            good += 1;
        }
        lines.push(format!("({mode:.4},{mean_e:.4},{naive:.4},{oracle:.4})"));
    }
    check(
        good >= 4 && within(elapsed, 900),
        format!(
            "ordering held in {good}/5 seeds; (modeiv,mean,naive,oracle) MSE {}; {:.0}s",
            lines.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let n_valid = 5;
    let mut good = 0;
    let mut argmins = Vec::new();
    let mut flat = 0;
    for &seed in &SEEDS {
        let (data, truth) = generate_demand(&DemandConfig::with_invalid(8, 3, 1.0, 10_000, seed)).unwrap();
        let sweep = sensitivity_sweep(&data, &truth, 2..=8, &demand_config(seed)).unwrap();
        let (best_v, best) = sweep
            .iter()
            .map(|r| (r.method.v().unwrap(), r.mse))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let conservative_ok = sweep
            .iter()
            .filter(|r| (4..=n_valid).contains(&r.method.v().unwrap()))
            .all(|r| r.mse <= 2.0 * best);
        if best_v.abs_diff(n_valid) <= 1 && conservative_ok {
            good += 1;
        }
        flat += conservative_ok as usize;
        argmins.push(best_v.to_string());
    }
    check(good >= 4, format!(
            "held in {good}/5 seeds; argmin V per seed: {}; V in [4, {n_valid}] within 2x of min in {flat}/5",
            argmins.join(",")
        ))
}

fn criterion_7(runs: &[Vec<MethodResult>]) -> Outcome {
    let good = runs
        .iter()
        .filter(|r| bias_of(r, Method::ModeIv { v: 10 }) <= 0.5 * bias_of(r, Method::NaiveAll))
        .count();
    let ratios: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.3}", bias_of(r, Method::ModeIv { v: 10 }) / bias_of(r, Method::NaiveAll)))
        .collect();
    let oracle: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let (data, truth) = mr_data(100_000, s);
            let r = run_comparison(&data, &truth, &[Method::OracleValid], &mr_config(s)).unwrap();
            r[0].cate_abs_bias
        })
        .collect();
    let oracle_med = median(oracle.clone());
    check(
        good >= 4 && oracle_med < 0.06,
        format!(
            "modeiv/naive bias ratio per seed {} ({good}/5 <= 0.5); oracle bias at n=100000 median {oracle_med:.4} (max {:.4})",
            ratios.join(","),
            oracle.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

/// y = 2t + 0.5w + u + e_y, t = z + u + e_t.
fn confounded_linear(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { rng.sample(rand_distr::StandardNormal) };
    let (mut y, mut t, mut x, mut z) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let (zi, u, w) = (normal(), normal(), normal());
        let ti = zi + u + normal();
        y.push(2.0 * ti + 0.5 * w + u + normal());
        t.push(ti);
        x.push(w);
        z.push(zi);
    }
    Dataset::new(y, t, x, 1, z, 1).unwrap()
}

fn criterion_8() -> Outcome {
    let data = confounded_linear(100_000, 8);
    let lin = fit_linear_tsls(&data, 0, &EstimatorSpec::linear()).unwrap();
    let Model::Linear {
        intercept,
        ref covariates,
        slope,
    } = lin.model
    else {
        unreachable!()
    };
    let sieve = fit_sieve(&data, 0, &EstimatorSpec::sieve(1).with_ridge(0.0)).unwrap();
    let Model::Sieve {
        ref treatment_coef,
        ref covariate_coef,
        ..
    } = sieve.model
    else {
        unreachable!()
    };
    let lin_coef = [intercept, covariates[0], slope];
    let sieve_coef = [covariate_coef[0], covariate_coef[1], treatment_coef[0]];
    let gap = lin_coef.iter().zip(&sieve_coef).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        (slope - 2.0).abs() < 0.05 && gap < 1e-6,
        format!("slope={slope:.4}, max |sieve - 2SLS| coefficient gap={gap:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let (demand, _) = generate_demand(&DemandConfig {
        n: 100_000,
        ..DemandConfig::default()
    })
    .unwrap();
    let time_sd = variance(&demand.x_col(0)).sqrt();
    let (mr, truth) = mr_data(100_000, 9);
    let TruthOracle::Mr(mt) = &truth else { unreachable!() };
    let genetic: Vec<f64> = (0..mr.n())
        .map(|i| mr.z_row(i).iter().zip(&mt.alpha).map(|(z, a)| z * a).sum())
        .collect();
    let (vt, vy) = (variance(mr.t()), variance(mr.y()));
    let share = variance(&genetic) / vt;
    let demand_ok = (time_sd / 2.8868 - 1.0).abs() <= 0.02;
    let mr_ok = (0.98..=1.02).contains(&vt) && (0.98..=1.02).contains(&vy) && (share / 0.1 - 1.0).abs() <= 0.1;
    check(
        demand_ok && mr_ok,
        format!("demand sd(time)={time_sd:.4}; MR var(t)={vt:.4} var(y)={vy:.4} instrument share={share:.4}"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DemandConfig::with_invalid(8, 3, 1.0, 2000, 10);
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        save_csv(&generate_demand(&cfg).unwrap().0, p).unwrap();
    }
    let same_data = std::fs::read(&paths[0]).unwrap() == std::fs::read(&paths[1]).unwrap();

    let (data, truth) = generate_demand(&cfg).unwrap();
    let conf = ComparisonConfig {
        grid: modeiv::eval::GridSpec {
            n_points: 100,
            x_sample: 50,
            ..Default::default()
        },
        ..demand_config(10)
    };
    let run = || results_csv(&records_from(&run_comparison(&data, &truth, &demand_methods(), &conf).unwrap(), Some(1.0), Some(3))).unwrap();
    let same_results = run() == run();

    let back = load_csv_auto(&paths[0]).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..data.n() {
        worst = worst.max((back.y()[i] - data.y()[i]).abs()).max((back.t()[i] - data.t()[i]).abs());
        for (a, b) in back.x_row(i).iter().zip(data.x_row(i)).chain(back.z_row(i).iter().zip(data.z_row(i))) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        same_data && same_results && worst <= 1e-12,
        format!("identical data files: {same_data}, identical results: {same_results}, worst round-trip error {worst:.1e}"),
    )
}

fn main() {
    // `cargo test --test acceptance -- 5 7` runs a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut failed = 0;
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    };
    let simple: [(usize, fn() -> Outcome); 3] = [(1, criterion_1), (2, criterion_2), (3, criterion_3)];
    for (n, f) in simple {
        if wanted(n) {
            report(n, f());
        }
    }
    if wanted(4) {
        report(4, criterion_4());
    }
    if wanted(5) || wanted(7) {
        let start = Instant::now();
        let mr = mr_runs();
        let elapsed = start.elapsed();
        if wanted(5) {
            report(5, criterion_5(&mr, elapsed));
        }
        if wanted(7) {
            report(7, criterion_7(&mr));
        }
    }
    let rest: [(usize, fn() -> Outcome); 4] = [(6, criterion_6), (8, criterion_8), (9, criterion_9), (10, criterion_10)];
    for (n, f) in rest {
        if wanted(n) {
            report(n, f());
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
