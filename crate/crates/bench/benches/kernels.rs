use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wup_core::builders::{build_interval, build_sg, build_sg_lattice};
use wup_core::functionals::{gradients, variance, VarianceKernel};
use wup_core::optimizer::{minimize_product, OptimizerOptions};
use wup_core::resistance::resistance_matrix;
use wup_core::{FunctionOnSpace, ProductVariant};

fn random_function(n: usize, seed: u64) -> FunctionOnSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FunctionOnSpace::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn resistance(c: &mut Criterion) {
    let mut group = c.benchmark_group("resistance_matrix");
    for m in [3, 4, 5] {
        let s = build_sg(m).unwrap();
        group.bench_with_input(BenchmarkId::new("sg", s.len()), &s, |b, s| {
            b.iter(|| resistance_matrix(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn variance_kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("variance");
    for n in [201, 1001] {
        let s = build_interval(n, n as f64 / 10.0, true).unwrap();
        let u = random_function(n, 1);
        group.bench_with_input(BenchmarkId::new("value", n), &u, |b, u| {
            b.iter(|| variance(&s, black_box(u), 2.0).unwrap())
        });
        let kernel = VarianceKernel::new(&s, 2.0).unwrap();
        group.bench_with_input(BenchmarkId::new("kernel_gradient", n), &u, |b, u| {
            b.iter(|| kernel.value_and_gradient(s.measure(), black_box(u.values())))
        });
        group.bench_with_input(BenchmarkId::new("gradients", n), &u, |b, u| {
            b.iter(|| gradients(&s, black_box(u), 2.0).unwrap())
        });
    }
    group.finish();
}

fn minimize(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimize_product");
    group.sample_size(10);
    let opts = OptimizerOptions {
        starts: 8,
        ..Default::default()
    };
    let sg = build_sg(3).unwrap();
    group.bench_function("sg(3) bounded_energy", |b| {
        b.iter(|| minimize_product(&sg, 3.15, ProductVariant::BoundedEnergy, &opts).unwrap())
    });
    let lattice = build_sg_lattice(2).unwrap();
    group.bench_function("sg_lattice(2) bounded_variance", |b| {
        b.iter(|| minimize_product(&lattice, 3.15, ProductVariant::BoundedVariance, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, resistance, variance_kernel, minimize);
criterion_main!(benches);
