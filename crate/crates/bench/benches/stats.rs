use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leakage_bench::{cells, factorial};
use leakage_core::stats::{bootstrap_slope, design_aware_bootstrap, ols_slope, spearman_rho};
use std::hint::black_box;

fn regression(c: &mut Criterion) {
    let pts: Vec<(f64, f64)> = cells(60)
        .iter()
        .flat_map(|cell| cell.estimates.iter().map(move |&e| (cell.target, e)))
        .collect();
    c.bench_function("ols_slope_360", |b| b.iter(|| ols_slope(black_box(&pts))));
    c.bench_function("spearman_360", |b| b.iter(|| spearman_rho(black_box(&pts))));
}

fn bootstrap(c: &mut Criterion) {
    let mut g = c.benchmark_group("bootstrap_slope");
    g.sample_size(20);
    for per_cell in [20, 60] {
        let data = cells(per_cell);
        g.bench_with_input(BenchmarkId::from_parameter(per_cell), &data, |b, d| {
            b.iter(|| bootstrap_slope(d, 2000, 7).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("design_aware_bootstrap");
    g.sample_size(10);
    let data = factorial(10);
    g.bench_function("6x3x2x10", |b| b.iter(|| design_aware_bootstrap(&data, 2000, 7).unwrap()));
    g.finish();
}

criterion_group!(benches, regression, bootstrap);
criterion_main!(benches);
