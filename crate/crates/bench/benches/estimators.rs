use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rankpen::estimators::{ann_fit, nnp_fit, rsc_fit};
use rankpen::linalg::thin_svd;
use rankpen::rng::{normal_matrix, substream};
use rankpen::tuning::cross_validate;
use rankpen::{CvOptions, EstimatorConfig, NnpOptions};
use rankpen_bench::regression;

fn svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("thin_svd");
    for n in [8, 25, 100] {
        let m = normal_matrix(n, n, &mut substream(1, 0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| thin_svd(black_box(m))));
    }
    group.finish();
}

fn closed_forms(c: &mut Criterion) {
    let (y, x) = regression(100, 25, 25, 10, 2);
    c.bench_function("rsc_fit model I size", |b| b.iter(|| rsc_fit(black_box(&y), black_box(&x), 50.0)));
    c.bench_function("ann_fit model I size", |b| b.iter(|| ann_fit(black_box(&y), black_box(&x), 50.0, 2.0, None)));
}

fn nnp(c: &mut Criterion) {
    let (y, x) = regression(100, 25, 25, 10, 3);
    let mut group = c.benchmark_group("nnp_fit");
    group.sample_size(10);
    for accelerate in [false, true] {
        let opts = NnpOptions { accelerate, ..NnpOptions::default() };
        group.bench_with_input(BenchmarkId::new("accelerate", accelerate), &opts, |b, opts| {
            b.iter(|| nnp_fit(black_box(&y), black_box(&x), 20.0, opts))
        });
    }
    group.finish();
}

fn cv(c: &mut Criterion) {
    let (y, x) = regression(100, 25, 25, 10, 4);
    let mut group = c.benchmark_group("cross_validate");
    group.sample_size(10);
    for cfg in [EstimatorConfig::ann(0.0, 2.0), EstimatorConfig::rsc(0.0)] {
        group.bench_function(cfg.method.name(), |b| {
            b.iter(|| cross_validate(black_box(&y), black_box(&x), &cfg, &CvOptions::default()))
        });
    }
    group.finish();
}

criterion_group!(benches, svd, closed_forms, nnp, cv);
criterion_main!(benches);
