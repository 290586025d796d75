use std::hint::black_box;

use accelpd_bench::{lasso, reg_s, start, SIZES};
use accelpd_core::diagnostics::Setting;
use accelpd_core::solvers::{step_apapc, step_apgd, step_papc, step_pgd, DualPath};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn primal_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("primal_step");
    for n in SIZES {
        let p = lasso(n).unwrap();
        let s = start(&p);
        let gamma = 1.0 / p.f.lipschitz();
        group.bench_with_input(BenchmarkId::new("pgd", n), &s, |b, s| {
            b.iter(|| step_pgd(black_box(s), &p.f, &p.g, gamma).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("apgd", n), &s, |b, s| {
            b.iter(|| step_apgd(black_box(s), &p.f, &p.g, gamma, 3.0).unwrap())
        });
    }
    group.finish();
}

fn primal_dual_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("primal_dual_step");
    for n in SIZES {
        let p = reg_s(n).unwrap();
        let s = start(&p);
        let gamma = 1.0 / p.f.lipschitz();
        let tau = 1.0 / (gamma * p.bounds().op_norm_sq);
        group.bench_with_input(BenchmarkId::new("papc", n), &s, |b, s| {
            b.iter(|| step_papc(black_box(s), &p.f, &p.h, &p.k, gamma, tau).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("apapc", n), &s, |b, s| {
            b.iter(|| step_apapc(black_box(s), &p.f, p.mu_g(), &p.h, &p.k, gamma, tau, 3.0, DualPath::Auto).unwrap())
        });
    }
    group.finish();
}

fn certificates(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_certificate");
    for n in SIZES {
        let p = reg_s(n).unwrap();
        let r = p.reference.as_ref().unwrap();
        let gamma = 1.0 / p.f.lipschitz();
        let tau = 1.0 / (gamma * p.bounds().op_norm_sq);
        let prev = start(&p);
        let next = step_apapc(&prev, &p.f, p.mu_g(), &p.h, &p.k, gamma, tau, 2.0, DualPath::Auto).unwrap();
        let setting = Setting::new(&p, r, gamma, tau);
        group.bench_function(BenchmarkId::new("apapc_inequality", n), |b| {
            b.iter(|| setting.step_inequality_apapc(black_box(&prev), black_box(&next), 2.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, primal_steps, primal_dual_steps, certificates);
criterion_main!(benches);
