use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vrsgt_bench::pca_fixture;
use vrsgt_core::directions::{h_local_full, DirectionParams};
use vrsgt_core::linalg::StackedVariable;
use vrsgt_core::metrics::stagap;
use vrsgt_core::network::mix;
use vrsgt_core::optimizer::HyperParams;
use vrsgt_core::Vrsgt;

fn directions(c: &mut Criterion) {
    let mut group = c.benchmark_group("h_local_full");
    let params = DirectionParams::new(1.0).unwrap();
    for n in [50, 200] {
        let f = pca_fixture(n, 5, 8, 64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| h_local_full(&f.oracle, 0, black_box(&f.x0), &params).unwrap())
        });
    }
    group.finish();
}

fn mixing(c: &mut Criterion) {
    let mut group = c.benchmark_group("mix");
    for d in [8, 32] {
        let f = pca_fixture(50, 5, d, 16);
        let v = StackedVariable::replicate(&f.x0, d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &v, |b, v| {
            b.iter(|| mix(&f.mixing, black_box(v)).unwrap())
        });
    }
    group.finish();
}

fn iterations(c: &mut Criterion) {
    let f = pca_fixture(50, 5, 8, 64);
    let hp = HyperParams {
        eta: 0.08,
        ..HyperParams::for_samples(64, 0.08)
    };
    let alg = Vrsgt::new(&f.oracle, &f.mixing, hp).unwrap();
    let start = alg.init(&f.x0).unwrap();
    let mut group = c.benchmark_group("vrsgt");
    group.bench_function("outer_step", |b| {
        b.iter_batched(
            || start.clone(),
            |mut st| alg.outer_step(&mut st).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
    let mut inner = start.clone();
    alg.outer_step(&mut inner).unwrap();
    group.bench_function("inner_step", |b| {
        b.iter_batched(
            || inner.clone(),
            |mut st| alg.inner_step(&mut st).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
    group.bench_function("stagap", |b| b.iter(|| stagap(&f.oracle, black_box(&start.x)).unwrap()));
    group.finish();
}

criterion_group!(benches, directions, mixing, iterations);
criterion_main!(benches);
