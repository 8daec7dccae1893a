use proptest::prelude::*;
use wup_core::builders::{self, build_pcf, solve_resistance_dimension, IfsSpec};
use wup_core::resistance::effective_resistance;

/// Vertices at the three outer corners of the unit gasket.
fn corners(s: &wup_core::MetricMeasureSpace) -> [usize; 3] {
    let coords = s.coordinates().unwrap();
    let find = |p: [f64; 2]| {
        coords
            .iter()
            .position(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-12)
            .unwrap()
    };
    [find([0.0, 0.0]), find([1.0, 0.0]), find([0.5, 3f64.sqrt() / 2.0])]
}

#[test]
fn gasket_corner_resistance_is_level_independent() {
    let r0 = effective_resistance(&builders::build_sg(0).unwrap(), 0, 1).unwrap();
    for m in 1..=5 {
        let s = builders::build_sg(m).unwrap();
        let total: f64 = s.measure().iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "m={m}: total mass {total}");
        let [a, b, c] = corners(&s);
        for (x, y) in [(a, b), (b, c), (a, c)] {
            let r = effective_resistance(&s, x, y).unwrap();
            assert!((r - r0).abs() < 1e-9, "m={m}: {r} vs {r0}");
        }
    }
}

#[test]
fn pcf_gasket_is_the_gasket() {
    for m in 0..=3 {
        let a = builders::build_sg(m).unwrap();
        let b = build_pcf(&IfsSpec::sierpinski_gasket(m)).unwrap();
        assert_eq!(a.len(), b.len());
        let mut ma = a.measure().to_vec();
        let mut mb = b.measure().to_vec();
        ma.sort_by(f64::total_cmp);
        mb.sort_by(f64::total_cmp);
        for (x, y) in ma.iter().zip(&mb) {
            assert!((x - y).abs() < 1e-12);
        }
        let ca: f64 = a.edges().iter().map(|e| e.conductance).sum();
        let cb: f64 = b.edges().iter().map(|e| e.conductance).sum();
        assert!((ca - cb).abs() < 1e-9 * ca);
    }
}

proptest! {
    #[test]
    fn resistance_dimension_solves_the_weight_equation(rho in prop::collection::vec(1.05f64..10.0, 2..6)) {
        let b = solve_resistance_dimension(&rho).unwrap();
        let residual = rho.iter().map(|r| r.powf(-b)).sum::<f64>() - 1.0;
        prop_assert!(residual.abs() < 1e-10, "b = {b}, residual {residual}");
    }
}
