use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use paradjoint::timestepping::leja::relpm_propagate;
use paradjoint::timestepping::rk45::rk45_integrate;
use paradjoint::{Dynamics, LejaConfig, ProblemKind, RkConfig};
use paradjoint_bench::testbed;

fn spmv(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmv");
    for n in [16, 32, 64] {
        let p = testbed(ProblemKind::AdvectionDiffusion, n, 0.1, 1.0);
        let a = p.linear_part();
        let x = p.sample_field(|x, y| x.sin() * y.cos());
        let mut y = vec![0.0; x.len()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| a.apply(black_box(&x), &mut y))
        });
    }
    group.finish();
}

// Homogeneous propagation over one unit of time: the exponential integrator
// against explicit time stepping, across diffusion strengths.
fn homogeneous(c: &mut Criterion) {
    let mut group = c.benchmark_group("homogeneous");
    group.sample_size(10);
    for d in [0.01, 1.0, 10.0] {
        let p = testbed(ProblemKind::AdvectionDiffusion, 32, d, 1.0);
        let a = p.linear_part();
        let v = p.sample_field(|x, y| x.sin() * y.sin());
        group.bench_with_input(BenchmarkId::new("relpm", d), &d, |b, _| {
            b.iter(|| relpm_propagate(a, black_box(&v), 1.0, &LejaConfig::with_tol(1e-6)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rk45", d), &d, |b, _| {
            b.iter(|| rk45_integrate(|_, y, dy| a.apply(y, dy), black_box(&v), 0.0, 1.0, &RkConfig::with_rtol(1e-6)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spmv, homogeneous);
criterion_main!(benches);
