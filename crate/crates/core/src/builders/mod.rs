//! Constructors for the example spaces: interval discretizations, Sierpiński
//! gasket approximations, Sierpiński lattice truncations, p.c.f. graphs from
//! an IFS, and cubes of the integer lattice with the group energy form.

mod ifs;

use std::collections::HashMap;

pub use ifs::{build_pcf, build_pcf_capped, solve_resistance_dimension, AffineMap, IfsSpec};

use crate::error::{Error, Result};
use crate::space::{Edge, Metadata, MetricMeasureSpace, MetricSource, SpaceParts};

/// Default cap on the number of vertices a builder may produce.
pub const DEFAULT_VERTEX_CAP: usize = 50_000;

/// Environment variable overriding [`DEFAULT_VERTEX_CAP`].
pub const VERTEX_CAP_ENV: &str = "WUP_MAX_VERTICES";

/// The active vertex cap: `WUP_MAX_VERTICES` if set and valid, else the default.
pub fn vertex_cap() -> usize {
    std::env::var(VERTEX_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_VERTEX_CAP)
}

pub(crate) fn check_cap(requested: usize, cap: usize) -> Result<()> {
    if requested > cap {
        return Err(Error::Capacity { requested, cap });
    }
    Ok(())
}

/// Path discretization of `[0, length]` with `n` equally spaced vertices.
/// Neighbour conductance `1/h`, vertex mass `h` (`h/2` at the ends), so the
/// effective resistance between vertices is their Euclidean separation.
pub fn build_interval(n: usize, length: f64, dirichlet_ends: bool) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::Domain(format!("interval needs n >= 2 vertices, got {n}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Domain(format!("interval length must be positive, got {length}")));
    }
    check_cap(n, vertex_cap())?;
    let h = length / (n - 1) as f64;
    let mut measure = vec![h; n];
    measure[0] = h / 2.0;
    measure[n - 1] = h / 2.0;
    let edges = (0..n - 1).map(|i| Edge::new(i, i + 1, 1.0 / h)).collect();
    let mut parts = SpaceParts::new(measure, edges, MetricSource::Euclidean);
    parts.coordinates = Some((0..n).map(|i| vec![i as f64 * h]).collect());
    if dirichlet_ends {
        parts.boundary = vec![0, n - 1];
    }
    parts.metadata = Metadata::new("interval")
        .with_param("n", n)
        .with_param("length", length)
        .with_param("dirichlet_ends", dirichlet_ends);
    MetricMeasureSpace::new(parts)
}

/// Vertex count of the level-`m` gasket graph, `3 (3^m + 1) / 2`.
pub fn sg_vertex_count(level: u32) -> Option<usize> {
    3usize
        .checked_pow(level)
        .and_then(|p| p.checked_add(1))
        .and_then(|p| p.checked_mul(3))
        .map(|p| p / 2)
}

/// Combinatorics of the level-`m` gasket graph in integer coordinates
/// `(i, j)` meaning `i * a + j * b` with `a = (1, 0)`, `b = (1/2, sqrt(3)/2)`
/// scaled by `2^-m`.
pub(crate) struct SgGraph {
    pub points: Vec<(u64, u64)>,
    /// Cells in depth-first word order, each as three vertex indices in the
    /// order of the images of the level-0 corners.
    pub cells: Vec<[usize; 3]>,
}

impl SgGraph {
    pub fn new(level: u32) -> Self {
        let side = 1u64 << level;
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut points = Vec::new();
        let mut cells = Vec::with_capacity(3usize.pow(level));
        let mut stack = vec![(0u64, 0u64, side)];
        // explicit stack in reverse child order keeps depth-first word order
        while let Some((i, j, s)) = stack.pop() {
            if s == 1 {
                let corners = [(i, j), (i + 1, j), (i, j + 1)];
                let mut cell = [0usize; 3];
                for (slot, p) in cell.iter_mut().zip(corners) {
                    *slot = *index.entry(p).or_insert_with(|| {
                        points.push(p);
                        points.len() - 1
                    });
                }
                cells.push(cell);
            } else {
                let h = s / 2;
                stack.push((i, j + h, h));
                stack.push((i + h, j, h));
                stack.push((i, j, h));
            }
        }
        Self { points, cells }
    }

    pub fn edges(&self, conductance: f64) -> Vec<Edge> {
        let mut edges = Vec::with_capacity(self.cells.len() * 3);
        for c in &self.cells {
            edges.push(Edge::new(c[0], c[1], conductance));
            edges.push(Edge::new(c[0], c[2], conductance));
            edges.push(Edge::new(c[1], c[2], conductance));
        }
        edges
    }

    pub fn planar(&self, scale: f64) -> Vec<Vec<f64>> {
        let h = 3f64.sqrt() / 2.0;
        self.points
            .iter()
            .map(|&(i, j)| vec![(i as f64 + 0.5 * j as f64) * scale, (j as f64 * h) * scale])
            .collect()
    }

    pub fn corner_indices(&self, level: u32) -> [usize; 3] {
        let side = 1u64 << level;
        let find = |p: (u64, u64)| self.points.iter().position(|&q| q == p).expect("corner present");
        [find((0, 0)), find((side, 0)), find((0, side))]
    }
}

/// Level-`m` Sierpiński gasket approximation `Γ_m` with the standard
/// self-similar energy (conductance `(5/3)^m` on every edge) and the
/// probability measure giving each `m`-cell mass `3^-m`, split equally
/// among its three vertices.
pub fn build_sg(level: u32) -> Result<MetricMeasureSpace> {
    build_sg_capped(level, vertex_cap())
}

pub fn build_sg_capped(level: u32, cap: usize) -> Result<MetricMeasureSpace> {
    let count = sg_vertex_count(level).unwrap_or(usize::MAX);
    check_cap(count, cap)?;
    let g = SgGraph::new(level);
    let conductance = (5.0f64 / 3.0).powi(level as i32);
    let share = 3f64.powi(-(level as i32)) / 3.0;
    let mut measure = vec![0.0; g.points.len()];
    for cell in &g.cells {
        for &v in cell {
            measure[v] += share;
        }
    }
    let mut parts = SpaceParts::new(measure, g.edges(conductance), MetricSource::EffectiveResistance);
    parts.coordinates = Some(g.planar(1.0 / (1u64 << level) as f64));
    parts.metadata = Metadata::new("sg").with_level(level);
    MetricMeasureSpace::new(parts)
}

/// Finite Sierpiński lattice truncation `2^m Γ_m`: the level-`m` gasket
/// graph with unit conductances and counting measure. The three outer
/// corners form the truncation boundary.
pub fn build_sg_lattice(level: u32) -> Result<MetricMeasureSpace> {
    build_sg_lattice_capped(level, vertex_cap())
}

pub fn build_sg_lattice_capped(level: u32, cap: usize) -> Result<MetricMeasureSpace> {
    if level < 1 {
        return Err(Error::Domain("Sierpiński lattice truncation needs level >= 1".into()));
    }
    let count = sg_vertex_count(level).unwrap_or(usize::MAX);
    check_cap(count, cap)?;
    let g = SgGraph::new(level);
    let mut parts = SpaceParts::new(
        vec![1.0; g.points.len()],
        g.edges(1.0),
        MetricSource::EffectiveResistance,
    );
    parts.coordinates = Some(g.planar(1.0));
    parts.boundary = g.corner_indices(level).to_vec();
    parts.metadata = Metadata::new("sg_lattice").with_level(level);
    MetricMeasureSpace::new(parts)
}

/// Cube `{0..side}^dim` of the integer lattice with generators the signed
/// unit vectors, counting measure, and the group energy
/// `1/(2|S|) sum_x sum_s |f(xs) - f(x)|^2`, i.e. conductance `1/|S|` per
/// undirected edge. The outer shell is the truncation boundary.
pub fn build_lattice_group(dim: usize, side: usize) -> Result<MetricMeasureSpace> {
    build_lattice_group_capped(dim, side, vertex_cap())
}

pub fn build_lattice_group_capped(dim: usize, side: usize, cap: usize) -> Result<MetricMeasureSpace> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Domain(format!("lattice dimension must be 1..=3, got {dim}")));
    }
    if side < 2 {
        return Err(Error::Domain(format!("lattice side must be >= 2, got {side}")));
    }
    let count = side.checked_pow(dim as u32).unwrap_or(usize::MAX);
    check_cap(count, cap)?;
    let generators = 2 * dim;
    let conductance = 1.0 / generators as f64;
    let coords_of = |mut idx: usize| {
        let mut c = vec![0usize; dim];
        for slot in c.iter_mut() {
            *slot = idx % side;
            idx /= side;
        }
        c
    };
    let mut edges = Vec::new();
    let mut boundary = Vec::new();
    let mut coordinates = Vec::with_capacity(count);
    for idx in 0..count {
        let c = coords_of(idx);
        if c.iter().any(|&v| v == 0 || v == side - 1) {
            boundary.push(idx);
        }
        let mut stride = 1;
        for &v in &c {
            if v + 1 < side {
                edges.push(Edge::new(idx, idx + stride, conductance));
            }
            stride *= side;
        }
        coordinates.push(c.iter().map(|&v| v as f64).collect());
    }
    let mut parts = SpaceParts::new(vec![1.0; count], edges, MetricSource::GraphShortestPath);
    parts.coordinates = Some(coordinates);
    parts.boundary = boundary;
    parts.metadata = Metadata::new("lattice_group")
        .with_param("dim", dim)
        .with_param("side", side);
    MetricMeasureSpace::new(parts)
}
