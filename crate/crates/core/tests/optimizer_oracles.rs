mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use wup_core::builders;
use wup_core::functionals::uncertainty_product;
use wup_core::optimizer::{minimize_product, sample_baseline, OptimizerOptions};
use wup_core::space::{ball, normalize};
use wup_core::verifier::{verify, VerifyOptions};
use wup_core::{Edge, FunctionOnSpace, MetricMeasureSpace, ProductVariant};

fn two_point() -> MetricMeasureSpace {
    common::RandomGraph {
        measure: vec![0.5, 0.5],
        edges: vec![Edge::new(0, 1, 1.0)],
    }
    .space()
}

#[test]
fn two_point_bounded_energy_minimum_matches_a_grid_scan() {
    // u = (a, b) with a^2/2 + b^2/2 = 1: Var = a^2 b^2 / 2, E = (a - b)^2
    let grid = 1_000_000;
    let scan = (0..grid)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / grid as f64;
            let (a, b) = (2f64.sqrt() * t.cos(), 2f64.sqrt() * t.sin());
            a * a * b * b / 2.0 * ((a - b) * (a - b) + 1.0)
        })
        .fold(f64::INFINITY, f64::min);
    let r = minimize_product(&two_point(), 2.0, ProductVariant::BoundedEnergy, &OptimizerOptions::default()).unwrap();
    assert!((r.product - scan).abs() <= 1e-6, "optimizer {} vs scan {scan}", r.product);
}

#[test]
fn minimum_is_below_every_start() {
    let opts = OptimizerOptions::default();
    for (s, variant) in [
        (builders::build_sg(2).unwrap(), ProductVariant::BoundedEnergy),
        (builders::build_sg_lattice(2).unwrap(), ProductVariant::BoundedVariance),
        (builders::build_interval(31, 3.0, true).unwrap(), ProductVariant::Unbounded),
    ] {
        let r = minimize_product(&s, 2.5, variant, &opts).unwrap();
        let baseline = sample_baseline(&s, 2.5, variant, opts.starts, opts.seed).unwrap();
        assert!(r.product <= baseline, "{}: {} > {baseline}", s.metadata().builder, r.product);
        let again = uncertainty_product(&s, &r.minimizer, 2.5, variant).unwrap();
        assert!((again - r.product).abs() <= 1e-12 * r.product.max(1e-300) + 1e-15);
    }
}

#[test]
fn identical_inputs_give_identical_results() {
    let s = builders::build_sg(3).unwrap();
    let opts = OptimizerOptions {
        seed: 42,
        ..Default::default()
    };
    let a = minimize_product(&s, 3.0, ProductVariant::BoundedEnergy, &opts).unwrap();
    let b = minimize_product(&s, 3.0, ProductVariant::BoundedEnergy, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.product.to_bits(), b.product.to_bits());
}

/// Lowest Dirichlet eigenfunction of the graph Laplacian on `support`,
/// extended by zero.
fn localized_eigenfunction(s: &MetricMeasureSpace, support: &[usize]) -> FunctionOnSpace {
    let k = support.len();
    let index = |x: usize| support.iter().position(|&y| y == x);
    let mu = s.measure();
    let mut l = DMatrix::<f64>::zeros(k, k);
    for (i, &x) in support.iter().enumerate() {
        for &(y, c) in &s.adjacency()[x] {
            l[(i, i)] += c;
            if let Some(j) = index(y) {
                l[(i, j)] -= c;
            }
        }
    }
    // symmetric form M^{-1/2} L M^{-1/2}
    let scaled = DMatrix::from_fn(k, k, |i, j| l[(i, j)] / (mu[support[i]] * mu[support[j]]).sqrt());
    let eig = SymmetricEigen::new(scaled);
    let low = eig.eigenvalues.imin();
    let mut values = vec![0.0; s.len()];
    for (i, &x) in support.iter().enumerate() {
        values[x] = eig.eigenvectors[(i, low)] / mu[x].sqrt();
    }
    normalize(s, &FunctionOnSpace::new(values).unwrap()).unwrap()
}

#[test]
fn localized_eigenfunctions_do_not_beat_the_minimum() {
    for m in [2, 3] {
        let s = builders::build_sg_lattice(m).unwrap();
        let report = verify(&s, &VerifyOptions::default()).unwrap();
        let gamma = report.b + 1.0;
        let variant = ProductVariant::BoundedVariance;
        let best = minimize_product(&s, gamma, variant, &OptimizerOptions::default()).unwrap();
        let center = s.len() / 2;
        for r in [1.0, 2.0] {
            let support: Vec<usize> = ball(&s, center, r)
                .unwrap()
                .members
                .into_iter()
                .filter(|&x| !s.is_boundary(x))
                .collect();
            let u = localized_eigenfunction(&s, &support);
            let p = uncertainty_product(&s, &u, gamma, variant).unwrap();
            assert!(p >= best.product, "m={m} r={r}: localized {p} < minimum {}", best.product);
        }
    }
}
