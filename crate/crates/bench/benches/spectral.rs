use std::hint::black_box;

use accelpd_bench::{reg_s, SIZES};
use accelpd_core::linops::{estimate_spectral_bounds, exact_spectral_bounds, power_iteration};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    for n in SIZES {
        let k = reg_s(n).unwrap().k;
        group.bench_with_input(BenchmarkId::new("power_iteration", n), &k, |b, k| {
            b.iter(|| power_iteration(black_box(k), 1e-10, 10_000).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("estimate", n), &k, |b, k| {
            b.iter(|| estimate_spectral_bounds(black_box(k), 1e-10, 10_000).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("exact", n), &k, |b, k| b.iter(|| exact_spectral_bounds(black_box(k)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, spectral);
criterion_main!(benches);
