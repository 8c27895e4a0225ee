use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modeiv::basis::BasisSpec;
use modeiv::estimators::{fit_ensemble, Conditioning, EnsembleFitConfig, FitTarget};
use modeiv::sim::{generate_demand, generate_mr, DemandConfig, MrConfig};
use modeiv::{fit_estimator, shortest_interval, AggregationConfig, EnsemblePredictor, EstimatorSpec, TestPoint};

/// Scrambled but reproducible values in [0, 1).
fn spread(k: usize) -> Vec<f64> {
    (0..k).map(|i| ((i * 7919 + 13) % 1009) as f64 / 1009.0).collect()
}

fn interval(c: &mut Criterion) {
    let mut group = c.benchmark_group("shortest_interval");
    for k in [10, 100, 1000] {
        let values = spread(k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &values, |b, v| {
            b.iter(|| shortest_interval(black_box(v), k / 2).unwrap())
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    let (mr, _) = generate_mr(&MrConfig {
        n: 20_000,
        ..MrConfig::default()
    })
    .unwrap();
    let no_screen = |spec: EstimatorSpec| EstimatorSpec {
        weak_instrument_threshold: 0.0,
        ..spec
    };
    group.bench_function("linear_2sls_mr", |b| {
        let spec = no_screen(EstimatorSpec::linear());
        b.iter(|| fit_estimator(&mr, &FitTarget::single(0), &spec).unwrap())
    });
    group.bench_function("cond_linear_mr", |b| {
        let spec = no_screen(EstimatorSpec::cond_linear(BasisSpec::polynomial(1)));
        b.iter(|| fit_estimator(&mr, &FitTarget::single(0), &spec).unwrap())
    });
    let (demand, _) = generate_demand(&DemandConfig::with_invalid(8, 3, 1.0, 5_000, 1)).unwrap();
    group.bench_function("cond_linear_demand_ensemble", |b| {
        let cfg = EnsembleFitConfig {
            conditioning: Conditioning::LeaveOneOut,
            ..EnsembleFitConfig::new(EstimatorSpec::cond_linear(BasisSpec::demand()))
        };
        b.iter(|| fit_ensemble(&demand, &cfg).unwrap())
    });
    group.finish();
}

fn curve(c: &mut Criterion) {
    let (data, _) = generate_demand(&DemandConfig::with_invalid(8, 3, 1.0, 5_000, 2)).unwrap();
    let fit = fit_ensemble(&data, &EnsembleFitConfig::new(EstimatorSpec::cond_linear(BasisSpec::demand()))).unwrap();
    let predictor = EnsemblePredictor::new(fit.estimators, AggregationConfig::with_v(4)).unwrap();
    let grid: Vec<TestPoint> = (0..1000)
        .map(|i| TestPoint::new(-2.0 + 4.0 * i as f64 / 999.0, data.x_row(i).to_vec()))
        .collect();
    c.bench_function("predict_curve_1000", |b| b.iter(|| predictor.predict_curve(black_box(&grid)).unwrap()));
}

criterion_group!(benches, interval, fit, curve);
criterion_main!(benches);
