//! Finite metric measure spaces carrying a Dirichlet form, and the ball
//! geometry every inequality in this crate is phrased in.

use std::collections::{BTreeMap, HashSet, VecDeque};

use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for metric-axiom checks.
pub const METRIC_TOL: f64 = 1e-9;

/// Where the distance of a space comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    EffectiveResistance,
    Euclidean,
    GraphShortestPath,
    Precomputed,
}

impl MetricSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricSource::EffectiveResistance => "effective_resistance",
            MetricSource::Euclidean => "euclidean",
            MetricSource::GraphShortestPath => "graph_shortest_path",
            MetricSource::Precomputed => "precomputed",
        }
    }
}

impl std::str::FromStr for MetricSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "effective_resistance" => Ok(MetricSource::EffectiveResistance),
            "euclidean" => Ok(MetricSource::Euclidean),
            "graph_shortest_path" => Ok(MetricSource::GraphShortestPath),
            "precomputed" => Ok(MetricSource::Precomputed),
            other => Err(Error::Domain(format!("unknown metric source '{other}'"))),
        }
    }
}

/// Undirected edge of the energy form with conductance `c > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub conductance: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, conductance: f64) -> Self {
        Self { a, b, conductance }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub builder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl Metadata {
    pub fn new(builder: impl Into<String>) -> Self {
        Self {
            builder: builder.into(),
            ..Default::default()
        }
    }

    pub fn with_level(mut self, level: u32) -> Self {
        self.level = Some(level);
        self
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }
}

/// Dense symmetric distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { n, values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::InvalidSpace("distance matrix is not square".into()));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n.max(1))
    }

    pub fn diameter(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest off-diagonal distance.
    pub fn min_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                m = m.min(self.get(i, j));
            }
        }
        m
    }

    /// Checks identity, symmetry, positivity and the triangle inequality.
    /// Exhaustive over triples for `n <= exhaustive_max`, otherwise checks
    /// `sampled` deterministic pseudo-random triples.
    pub fn check_metric(&self, tol: f64, exhaustive_max: usize, sampled: usize) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i).abs() > tol {
                return Err(Error::InvalidSpace(format!("d({i},{i}) = {}", self.get(i, i))));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if (a - b).abs() > tol * a.abs().max(1.0) {
                    return Err(Error::InvalidSpace(format!("asymmetric at ({i},{j})")));
                }
                if a <= 0.0 || !a.is_finite() {
                    return Err(Error::InvalidSpace(format!("d({i},{j}) = {a} is not positive")));
                }
            }
        }
        let check = |x: usize, y: usize, z: usize| -> Result<()> {
            let lhs = self.get(x, z);
            let rhs = self.get(x, y) + self.get(y, z);
            if lhs > rhs + tol * rhs.max(1.0) {
                return Err(Error::InvalidSpace(format!(
                    "triangle inequality fails: d({x},{z}) = {lhs} > {rhs}"
                )));
            }
            Ok(())
        };
        if n <= exhaustive_max {
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        check(x, y, z)?;
                    }
                }
            }
        } else {
            let mut state = 0x9e37_79b9_7f4a_7c15_u64;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % n as u64) as usize
            };
            for _ in 0..sampled {
                let (x, y, z) = (next(), next(), next());
                check(x, y, z)?;
            }
        }
        Ok(())
    }
}

/// Everything needed to assemble a [`MetricMeasureSpace`].
#[derive(Clone, Debug)]
pub struct SpaceParts {
    pub measure: Vec<f64>,
    pub edges: Vec<Edge>,
    pub coordinates: Option<Vec<Vec<f64>>>,
    pub metric_source: MetricSource,
    pub boundary: Vec<usize>,
    pub metadata: Metadata,
    /// Required when `metric_source` is `Precomputed`, ignored otherwise.
    pub distance: Option<DistanceMatrix>,
}

impl SpaceParts {
    pub fn new(measure: Vec<f64>, edges: Vec<Edge>, metric_source: MetricSource) -> Self {
        Self {
            measure,
            edges,
            coordinates: None,
            metric_source,
            boundary: Vec::new(),
            metadata: Metadata::default(),
            distance: None,
        }
    }
}

/// A finite vertex set with a measure, a Dirichlet form given by edge
/// conductances, and a metric. Immutable after construction apart from the
/// lazily filled distance cache.
#[derive(Clone, Debug)]
pub struct MetricMeasureSpace {
    measure: Vec<f64>,
    edges: Vec<Edge>,
    coordinates: Option<Vec<Vec<f64>>>,
    metric_source: MetricSource,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
    metadata: Metadata,
    adjacency: Vec<Vec<(usize, f64)>>,
    distance: OnceCell<DistanceMatrix>,
}

impl MetricMeasureSpace {
    pub fn new(parts: SpaceParts) -> Result<Self> {
        let n = parts.measure.len();
        if n == 0 {
            return Err(Error::InvalidSpace("space has no vertices".into()));
        }
        for (i, &m) in parts.measure.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidSpace(format!("measure at vertex {i} is {m}")));
            }
        }
        let mut seen = HashSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for e in &parts.edges {
            if e.a >= n || e.b >= n {
                return Err(Error::InvalidSpace(format!(
                    "edge ({}, {}) references a missing vertex",
                    e.a, e.b
                )));
            }
            if e.a == e.b {
                return Err(Error::InvalidSpace(format!("self-loop at vertex {}", e.a)));
            }
            if !(e.conductance > 0.0 && e.conductance.is_finite()) {
                return Err(Error::InvalidSpace(format!(
                    "edge ({}, {}) has conductance {}",
                    e.a, e.b, e.conductance
                )));
            }
            let key = (e.a.min(e.b), e.a.max(e.b));
            if !seen.insert(key) {
                return Err(Error::InvalidSpace(format!(
                    "edge ({}, {}) listed twice",
                    key.0, key.1
                )));
            }
            adjacency[e.a].push((e.b, e.conductance));
            adjacency[e.b].push((e.a, e.conductance));
        }
        if let Some(coords) = &parts.coordinates {
            if coords.len() != n {
                return Err(Error::InvalidSpace("coordinate count differs from vertex count".into()));
            }
            let dim = coords[0].len();
            if coords.iter().any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidSpace("coordinates are ragged or non-finite".into()));
            }
        }
        let mut boundary = parts.boundary.clone();
        boundary.sort_unstable();
        boundary.dedup();
        if boundary.iter().any(|&b| b >= n) {
            return Err(Error::InvalidSpace("boundary references a missing vertex".into()));
        }
        let mut is_boundary = vec![false; n];
        for &b in &boundary {
            is_boundary[b] = true;
        }

        let space = Self {
            measure: parts.measure,
            edges: parts.edges,
            coordinates: parts.coordinates,
            metric_source: parts.metric_source,
            boundary,
            is_boundary,
            metadata: parts.metadata,
            adjacency,
            distance: OnceCell::new(),
        };
        if let Some((x, y)) = space.disconnected_pair() {
            return Err(Error::Disconnected(x, y));
        }
        match space.metric_source {
            MetricSource::Euclidean if space.coordinates.is_none() => {
                return Err(Error::InvalidSpace("euclidean metric requires coordinates".into()))
            }
            MetricSource::Precomputed => {
                let d = parts.distance.ok_or_else(|| {
                    Error::InvalidSpace("precomputed metric requires a distance matrix".into())
                })?;
                if d.n() != n {
                    return Err(Error::InvalidSpace("distance matrix size mismatch".into()));
                }
                d.check_metric(METRIC_TOL, 200, 100_000)?;
                let _ = space.distance.set(d);
            }
            _ => {}
        }
        Ok(space)
    }

    /// Same space with a different metric. Precomputed metrics cannot be
    /// selected this way.
    pub fn with_metric_source(&self, source: MetricSource) -> Result<Self> {
        if source == MetricSource::Precomputed {
            return Err(Error::UnsupportedMetric(
                "a precomputed metric needs an explicit distance matrix".into(),
            ));
        }
        if source == MetricSource::Euclidean && self.coordinates.is_none() {
            return Err(Error::InvalidSpace("euclidean metric requires coordinates".into()));
        }
        let mut out = self.clone();
        out.metric_source = source;
        out.distance = OnceCell::new();
        Ok(out)
    }

    /// Same space with a replaced boundary set.
    pub fn with_boundary(&self, boundary: Vec<usize>) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.boundary = boundary;
        Self::new(parts)
    }

    pub fn to_parts(&self) -> SpaceParts {
        SpaceParts {
            measure: self.measure.clone(),
            edges: self.edges.clone(),
            coordinates: self.coordinates.clone(),
            metric_source: self.metric_source,
            boundary: self.boundary.clone(),
            metadata: self.metadata.clone(),
            distance: if self.metric_source == MetricSource::Precomputed {
                self.distance.get().cloned()
            } else {
                None
            },
        }
    }

    fn disconnected_pair(&self) -> Option<(usize, usize)> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &self.adjacency[x] {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen.iter().position(|s| !s).map(|y| (0, y))
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn total_measure(&self) -> f64 {
        crate::linalg::compensated_sum(self.measure.iter().copied())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &[Vec<(usize, f64)>] {
        &self.adjacency
    }

    pub fn coordinates(&self) -> Option<&[Vec<f64>]> {
        self.coordinates.as_deref()
    }

    pub fn metric_source(&self) -> MetricSource {
        self.metric_source
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, x: usize) -> bool {
        self.is_boundary[x]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.is_boundary
    }

    /// Vertices not pinned by the boundary condition.
    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&x| !self.is_boundary[x]).collect()
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    /// The distance matrix for the space's metric source, computed on first
    /// use and cached.
    pub fn distance(&self) -> Result<&DistanceMatrix> {
        self.distance.get_or_try_init(|| self.compute_distance())
    }

    /// Whether the distance cache is already filled.
    pub fn has_distance(&self) -> bool {
        self.distance.get().is_some()
    }

    fn compute_distance(&self) -> Result<DistanceMatrix> {
        match self.metric_source {
            MetricSource::EffectiveResistance => {
                Ok(crate::resistance::resistance_matrix(self)?.into_distance())
            }
            MetricSource::Euclidean => {
                let coords = self.coordinates.as_ref().expect("checked at construction");
                Ok(DistanceMatrix::from_fn(self.len(), |i, j| {
                    coords[i]
                        .iter()
                        .zip(&coords[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                }))
            }
            MetricSource::GraphShortestPath => Ok(self.hop_distance()),
            MetricSource::Precomputed => Err(Error::InvalidSpace(
                "precomputed metric missing from space".into(),
            )),
        }
    }

    fn hop_distance(&self) -> DistanceMatrix {
        let n = self.len();
        let mut rows = vec![vec![0.0; n]; n];
        for (s, row) in rows.iter_mut().enumerate() {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                for &(y, _) in &self.adjacency[x] {
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        queue.push_back(y);
                    }
                }
            }
            for (r, d) in row.iter_mut().zip(dist) {
                *r = d as f64;
            }
        }
        DistanceMatrix::from_rows(rows).expect("square by construction")
    }

    pub(crate) fn check_vertex(&self, x: usize) -> Result<()> {
        if x >= self.len() {
            return Err(Error::Domain(format!(
                "vertex {x} out of range for a space with {} vertices",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Real-valued function on the vertices of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionOnSpace {
    values: Vec<f64>,
}

impl FunctionOnSpace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("value at vertex {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn indicator(n: usize, x: usize) -> Self {
        let mut values = vec![0.0; n];
        values[x] = 1.0;
        Self { values }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn check_aligned(&self, space: &MetricMeasureSpace) -> Result<()> {
        if self.len() != space.len() {
            return Err(Error::Alignment {
                expected: space.len(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for FunctionOnSpace {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Relative slack in ball membership, so that roundoff in computed
/// resistances does not drop vertices lying exactly on the sphere.
pub const BALL_REL_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn within(d: f64, r: f64) -> bool {
    d <= r * (1.0 + BALL_REL_TOL)
}

/// Closed ball `{x : d(x, center) <= radius}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
}

impl Ball {
    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Measure-weighted L2 norm.
pub fn l2_norm(space: &MetricMeasureSpace, u: &FunctionOnSpace) -> Result<f64> {
    u.check_aligned(space)?;
    Ok(weighted_l2(space.measure(), u.values()))
}

pub(crate) fn weighted_l2(mu: &[f64], u: &[f64]) -> f64 {
    crate::linalg::compensated_sum(u.iter().zip(mu).map(|(v, m)| v * v * m)).sqrt()
}

/// Rescales `u` to unit L2 norm.
pub fn normalize(space: &MetricMeasureSpace, u: &FunctionOnSpace) -> Result<FunctionOnSpace> {
    let norm = l2_norm(space, u)?;
    if norm == 0.0 {
        return Err(Error::DegenerateInput("cannot normalize the zero function".into()));
    }
    Ok(u.scaled(1.0 / norm))
}

pub fn ball(space: &MetricMeasureSpace, center: usize, r: f64) -> Result<Ball> {
    space.check_vertex(center)?;
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("ball radius {r} is negative")));
    }
    let d = space.distance()?;
    let members = d
        .row(center)
        .iter()
        .enumerate()
        .filter(|&(x, &dx)| x == center || within(dx, r))
        .map(|(x, _)| x)
        .collect();
    Ok(Ball {
        center,
        radius: r,
        members,
    })
}

pub fn ball_measure(space: &MetricMeasureSpace, center: usize, r: f64) -> Result<f64> {
    let b = ball(space, center, r)?;
    Ok(measure_of(space, &b.members))
}

pub(crate) fn measure_of(space: &MetricMeasureSpace, members: &[usize]) -> f64 {
    let mu = space.measure();
    crate::linalg::compensated_sum(members.iter().map(|&x| mu[x]))
}

/// Measure-weighted mean of `u` over the ball.
pub fn ball_average(space: &MetricMeasureSpace, u: &FunctionOnSpace, b: &Ball) -> Result<f64> {
    u.check_aligned(space)?;
    Ok(average_over(space.measure(), u.values(), &b.members))
}

pub(crate) fn average_over(mu: &[f64], u: &[f64], members: &[usize]) -> f64 {
    let num = crate::linalg::compensated_sum(members.iter().map(|&x| u[x] * mu[x]));
    let den = crate::linalg::compensated_sum(members.iter().map(|&x| mu[x]));
    num / den
}

/// `x -> mean of u over B_r(x)`.
pub fn local_average_function(
    space: &MetricMeasureSpace,
    u: &FunctionOnSpace,
    r: f64,
) -> Result<FunctionOnSpace> {
    u.check_aligned(space)?;
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius {r} is negative")));
    }
    let d = space.distance()?;
    let mu = space.measure();
    let vals = (0..space.len())
        .map(|x| {
            let members: Vec<usize> = d
                .row(x)
                .iter()
                .enumerate()
                .filter(|&(y, &dy)| y == x || within(dy, r))
                .map(|(y, _)| y)
                .collect();
            average_over(mu, u.values(), &members)
        })
        .collect();
    Ok(FunctionOnSpace::from_vec_unchecked(vals))
}
