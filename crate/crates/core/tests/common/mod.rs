#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wup_core::builders::{self, build_pcf, IfsSpec};
use wup_core::{Edge, FunctionOnSpace, MetricMeasureSpace, MetricSource, SpaceParts};

/// Every builder's output with at most 200 vertices, with a label.
pub fn small_builder_outputs() -> Vec<(String, MetricMeasureSpace)> {
    let mut out = vec![
        ("interval(11, 10)".to_string(), builders::build_interval(11, 10.0, false).unwrap()),
        ("interval(21, 2, dirichlet)".to_string(), builders::build_interval(21, 2.0, true).unwrap()),
        ("lattice_group(1, 9)".to_string(), builders::build_lattice_group(1, 9).unwrap()),
        ("lattice_group(2, 5)".to_string(), builders::build_lattice_group(2, 5).unwrap()),
        ("lattice_group(3, 3)".to_string(), builders::build_lattice_group(3, 3).unwrap()),
        ("pcf interval(4)".to_string(), build_pcf(&IfsSpec::unit_interval(4)).unwrap()),
        ("pcf gasket(2)".to_string(), build_pcf(&IfsSpec::sierpinski_gasket(2)).unwrap()),
    ];
    for m in 0..=3 {
        out.push((format!("sg({m})"), builders::build_sg(m).unwrap()));
    }
    for m in 1..=3 {
        out.push((format!("sg_lattice({m})"), builders::build_sg_lattice(m).unwrap()));
    }
    out
}

pub fn random_function(n: usize, rng: &mut ChaCha8Rng) -> FunctionOnSpace {
    FunctionOnSpace::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected weighted graph: a random spanning tree plus extra edges.
#[derive(Clone, Debug)]
pub struct RandomGraph {
    pub measure: Vec<f64>,
    pub edges: Vec<Edge>,
}

impl RandomGraph {
    pub fn space(&self) -> MetricMeasureSpace {
        MetricMeasureSpace::new(SpaceParts::new(
            self.measure.clone(),
            self.edges.clone(),
            MetricSource::EffectiveResistance,
        ))
        .unwrap()
    }
}

pub fn random_graph(max_n: usize) -> impl Strategy<Value = RandomGraph> {
    (2..=max_n).prop_flat_map(|n| {
        let parents = (1..n).map(|i| 0..i).collect::<Vec<_>>();
        let tree_c = prop::collection::vec(0.1f64..10.0, n - 1);
        let extra = prop::collection::vec((0..n, 0..n, 0.1f64..10.0), 0..(2 * n));
        let measure = prop::collection::vec(0.1f64..5.0, n);
        (parents, tree_c, extra, measure).prop_map(move |(parents, tree_c, extra, measure)| {
            let mut edges: Vec<Edge> = parents
                .iter()
                .enumerate()
                .map(|(i, &p)| Edge::new(p, i + 1, tree_c[i]))
                .collect();
            for (a, b, c) in extra {
                let (a, b) = (a.min(b), a.max(b));
                if a != b && !edges.iter().any(|e| e.a.min(e.b) == a && e.a.max(e.b) == b) {
                    edges.push(Edge::new(a, b, c));
                }
            }
            RandomGraph { measure, edges }
        })
    })
}
