use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use critdrift::drift::{build_drift, form_bound_estimate, mollify_drift, FormBoundOptions};
use critdrift::orlicz::orlicz_norm;
use critdrift::solver::solve;
use critdrift::spectral::Spectral;
use critdrift::{DriftSpec, ScalarField, SolverConfig, TorusGrid};

fn datum(grid: TorusGrid) -> ScalarField {
    ScalarField::from_fn(grid, |x| 0.1 + 0.5 * (2.0 * PI * x[0]).sin() + 0.3 * (2.0 * PI * (x[1] + x[2])).cos())
        .unwrap()
}

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_roundtrip");
    for n in [32, 64] {
        let grid = TorusGrid::new(3, n).unwrap();
        let spectral = Spectral::new(grid);
        let f = datum(grid);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter(|| spectral.inverse(spectral.forward(black_box(f.values()))))
        });
    }
    group.finish();
}

fn orlicz(c: &mut Criterion) {
    let grid = TorusGrid::new(3, 64).unwrap();
    let f = datum(grid);
    c.bench_function("orlicz_norm_n64", |bch| bch.iter(|| orlicz_norm(black_box(&f), 1e-10).unwrap()));
}

fn formbound(c: &mut Criterion) {
    let grid = TorusGrid::new(3, 32).unwrap();
    let b = build_drift(&DriftSpec::hardy(1.0, 1.0, None), grid).unwrap();
    let options = FormBoundOptions::default();
    let mut group = c.benchmark_group("form_bound_n32");
    group.sample_size(10);
    group.bench_function("single_c", |bch| {
        bch.iter(|| form_bound_estimate(black_box(&b), &[2.0], &options).unwrap())
    });
    group.finish();
}

fn solver_step(c: &mut Criterion) {
    let grid = TorusGrid::new(3, 32).unwrap();
    let b = mollify_drift(&build_drift(&DriftSpec::hardy(1.0, 1.0, None), grid).unwrap(), 1e-3).unwrap();
    let f = datum(grid);
    let mut config = SolverConfig::new(1e-3, 1e-2);
    config.snapshot_stride = 1000;
    let mut group = c.benchmark_group("solver_n32");
    group.sample_size(10);
    group.bench_function("ten_steps", |bch| bch.iter(|| solve(black_box(&b), &f, &config).unwrap()));
    group.finish();
}

criterion_group!(benches, fft, orlicz, formbound, solver_step);
criterion_main!(benches);
