use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sheq_core::error_lab::{modeling_error_exact, sdr_error_exact, tdr_error_exact};
use sheq_core::fem::generalized_eigen;
use sheq_core::stochastic::{cn_fem_spde, cn_time_discrete};
use sheq_core::{FemSystem, GridDims, NoiseGrid};

fn noise(c: &mut Criterion) {
    let mut g = c.benchmark_group("noise_sample");
    for p in [6u32, 8, 10] {
        let dims = GridDims::new(1 << p, 1 << p, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(1 << p), &dims, |b, &d| {
            b.iter(|| NoiseGrid::sample_dims(d, black_box(7)))
        });
    }
    g.finish();
}

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("generalized_eigen");
    for j in [32usize, 64, 128] {
        let system = FemSystem::new(j).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(j), &system, |b, s| {
            b.iter(|| generalized_eigen(black_box(s)).unwrap())
        });
    }
    g.finish();
}

fn direct_solvers(c: &mut Criterion) {
    let grid = NoiseGrid::sample(256, 256, 1.0, 3).unwrap();
    let system = FemSystem::new(64).unwrap();
    c.bench_function("cn_time_discrete/K=1024,M=128", |b| {
        b.iter(|| cn_time_discrete(black_box(&grid), 1024, 128).unwrap())
    });
    c.bench_function("cn_fem_spde/J=64,M=128", |b| {
        b.iter(|| cn_fem_spde(black_box(&grid), &system, 128).unwrap())
    });
}

fn exact_errors(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_errors");
    g.sample_size(10);
    let model_dims = GridDims::new(1 << 12, 1 << 8, 1.0).unwrap();
    g.bench_function("modeling/K=1e6", |b| {
        b.iter(|| modeling_error_exact(1.0, black_box(model_dims), 1_000_000).unwrap())
    });
    let dims = GridDims::new(1024, 256, 1.0).unwrap();
    g.bench_function("tdr/M=256,K=1024", |b| {
        b.iter(|| tdr_error_exact(256, black_box(dims), 256, 1024).unwrap())
    });
    let system = FemSystem::new(32).unwrap();
    let basis = generalized_eigen(&system).unwrap();
    g.bench_function("sdr/J=32,M=256,K=1024", |b| {
        b.iter(|| sdr_error_exact(256, black_box(dims), 256, &system, &basis, 1024).unwrap())
    });
    g.finish();
}

criterion_group!(benches, noise, eigen, direct_solvers, exact_errors);
criterion_main!(benches);
