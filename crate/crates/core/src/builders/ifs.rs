use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_cap, vertex_cap};
use crate::error::{Error, Result};
use crate::space::{Edge, Metadata, MetricMeasureSpace, MetricSource, SpaceParts};

/// Affine map `x -> A x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, b)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        let d = self.dim();
        let mut matrix = vec![vec![0.0; d]; d];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = (0..d).map(|k| self.matrix[i][k] * other.matrix[k][j]).sum();
            }
        }
        let offset = self.apply(&other.offset);
        AffineMap { matrix, offset }
    }

    pub fn identity(dim: usize) -> AffineMap {
        let mut matrix = vec![vec![0.0; dim]; dim];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        AffineMap {
            matrix,
            offset: vec![0.0; dim],
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.matrix[i][j])
    }

    /// Operator 2-norm of the linear part.
    pub fn contraction_ratio(&self) -> f64 {
        self.dense().singular_values().max()
    }

    pub fn fixed_point(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        let m = DMatrix::identity(d, d) - self.dense();
        let b = nalgebra::DVector::from_column_slice(&self.offset);
        m.lu().solve(&b).map(|x| x.as_slice().to_vec())
    }
}

#[derive(Deserialize)]
struct IfsSpecFile {
    maps: Vec<AffineMap>,
    rho: Vec<f64>,
    #[serde(default)]
    level: u32,
    #[serde(default)]
    v0: Option<Vec<Vec<f64>>>,
}

/// Self-similar structure: contractions, resistance scaling weights and the
/// refinement level. The resistance dimension `b` solves
/// `sum rho_i^-b = 1` and the measure weights are `mu_i = rho_i^-b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IfsSpecFile")]
pub struct IfsSpec {
    pub maps: Vec<AffineMap>,
    pub rho: Vec<f64>,
    pub level: u32,
    /// Level-0 vertex set. Defaults to the fixed points of the maps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    resistance_dimension: f64,
    #[serde(skip)]
    measure_weights: Vec<f64>,
}

impl TryFrom<IfsSpecFile> for IfsSpec {
    type Error = Error;
    fn try_from(f: IfsSpecFile) -> Result<Self> {
        IfsSpec::new(f.maps, f.rho, f.level, f.v0)
    }
}

impl IfsSpec {
    pub fn new(
        maps: Vec<AffineMap>,
        rho: Vec<f64>,
        level: u32,
        v0: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::Domain("an IFS needs at least two maps".into()));
        }
        if rho.len() != maps.len() {
            return Err(Error::Domain(format!(
                "{} maps but {} resistance weights",
                maps.len(),
                rho.len()
            )));
        }
        let dim = maps[0].dim();
        if dim == 0 {
            return Err(Error::Domain("maps act on an empty space".into()));
        }
        for (i, m) in maps.iter().enumerate() {
            if m.dim() != dim || m.matrix.len() != dim || m.matrix.iter().any(|r| r.len() != dim) {
                return Err(Error::Domain(format!("map {i} has inconsistent dimensions")));
            }
            let ratio = m.contraction_ratio();
            if !(ratio < 1.0) {
                return Err(Error::Domain(format!("map {i} has contraction ratio {ratio} >= 1")));
            }
        }
        if let Some(points) = &v0 {
            if points.len() < 2 || points.iter().any(|p| p.len() != dim) {
                return Err(Error::Domain("level-0 vertex set must have >= 2 points of the map dimension".into()));
            }
        }
        let b = solve_resistance_dimension(&rho)?;
        let raw: Vec<f64> = rho.iter().map(|r| r.powf(-b)).collect();
        let total: f64 = raw.iter().sum();
        // b is only accurate to the bisection tolerance; keep a probability vector
        let measure_weights = raw.iter().map(|w| w / total).collect();
        Ok(Self {
            maps,
            rho,
            level,
            v0,
            resistance_dimension: b,
            measure_weights,
        })
    }

    /// The planar gasket: three half-scale maps, `rho_i = 5/3`.
    pub fn sierpinski_gasket(level: u32) -> Self {
        let h = 3f64.sqrt() / 4.0;
        let half = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        let maps = [[0.0, 0.0], [0.5, 0.0], [0.25, h]]
            .iter()
            .map(|o| AffineMap {
                matrix: half.clone(),
                offset: o.to_vec(),
            })
            .collect();
        Self::new(maps, vec![5.0 / 3.0; 3], level, None).expect("valid gasket IFS")
    }

    /// `[0, 1]` as the union of its two halves, `rho_i = 2`.
    pub fn unit_interval(level: u32) -> Self {
        let maps = [0.0, 0.5]
            .iter()
            .map(|&o| AffineMap {
                matrix: vec![vec![0.5]],
                offset: vec![o],
            })
            .collect();
        Self::new(maps, vec![2.0, 2.0], level, None).expect("valid interval IFS")
    }

    pub fn map_count(&self) -> usize {
        self.maps.len()
    }

    pub fn resistance_dimension(&self) -> f64 {
        self.resistance_dimension
    }

    pub fn measure_weights(&self) -> &[f64] {
        &self.measure_weights
    }

    pub fn level0_points(&self) -> Result<Vec<Vec<f64>>> {
        match &self.v0 {
            Some(p) => Ok(p.clone()),
            None => self
                .maps
                .iter()
                .map(|m| {
                    m.fixed_point()
                        .ok_or_else(|| Error::Construction("map has no unique fixed point".into()))
                })
                .collect(),
        }
    }
}

/// Unique `b > 0` with `sum rho_i^-b = 1`, by bisection to `1e-12`.
pub fn solve_resistance_dimension(rho: &[f64]) -> Result<f64> {
    if rho.len() < 2 {
        return Err(Error::Domain("need at least two resistance weights".into()));
    }
    if let Some(r) = rho.iter().find(|&&r| !(r > 1.0 && r.is_finite())) {
        return Err(Error::Domain(format!("resistance weight {r} is not > 1")));
    }
    let g = |b: f64| rho.iter().map(|r| r.powf(-b)).sum::<f64>() - 1.0;
    // g is strictly decreasing, g(0) = N - 1 > 0, g -> -1 as b -> inf
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn build_pcf(spec: &IfsSpec) -> Result<MetricMeasureSpace> {
    build_pcf_capped(spec, vertex_cap())
}

/// Level-`m` graph of a p.c.f. structure: each `m`-cell `F_w(V_0)` carries a
/// copy of the complete graph on `V_0` with conductance `prod rho_{w_i}`, and
/// mass `prod mu_{w_i}` split equally among its vertices. Coinciding points
/// of different cells are identified.
pub fn build_pcf_capped(spec: &IfsSpec, cap: usize) -> Result<MetricMeasureSpace> {
    let v0 = spec.level0_points()?;
    let k = v0.len();
    let n_maps = spec.map_count();
    let cell_count = n_maps
        .checked_pow(spec.level)
        .ok_or(Error::Capacity { requested: usize::MAX, cap })?;
    check_cap(cell_count.saturating_mul(k).min(usize::MAX), cap).or_else(|e| {
        // the bound above over-counts shared vertices; only fail when even
        // the cell count alone is over the cap
        if cell_count > cap {
            Err(e)
        } else {
            Ok(())
        }
    })?;

    let scale = v0
        .iter()
        .flat_map(|p| v0.iter().map(move |q| dist(p, q)))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let merge_tol = 1e-9 * scale;
    let ambiguous_tol = 1e-6 * scale;

    let mut registry = PointRegistry::new(merge_tol);
    let mut measure: Vec<f64> = Vec::new();
    let mut edges: HashMap<(usize, usize), f64> = HashMap::new();
    let mut edge_order: Vec<(usize, usize)> = Vec::new();

    // depth-first over words, children in map order
    let mut stack = vec![(AffineMap::identity(v0[0].len()), 0u32, 1.0f64, 1.0f64)];
    while let Some((map, depth, conductance, mass)) = stack.pop() {
        if depth == spec.level {
            let images: Vec<Vec<f64>> = v0.iter().map(|p| map.apply(p)).collect();
            for a in 0..k {
                for b in (a + 1)..k {
                    if dist(&images[a], &images[b]) <= ambiguous_tol {
                        return Err(Error::Construction(
                            "cell vertices collapse: maps are not injective at machine precision".into(),
                        ));
                    }
                }
            }
            let mut ids = Vec::with_capacity(k);
            for p in images {
                let id = registry.lookup_or_insert(p, ambiguous_tol)?;
                if id == measure.len() {
                    measure.push(0.0);
                }
                measure[id] += mass / k as f64;
                ids.push(id);
            }
            for a in 0..k {
                for b in (a + 1)..k {
                    let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                    let slot = edges.entry(key).or_insert_with(|| {
                        edge_order.push(key);
                        0.0
                    });
                    // parallel edges from different cells add up
                    *slot += conductance;
                }
            }
            check_cap(measure.len(), cap)?;
        } else {
            for i in (0..n_maps).rev() {
                stack.push((
                    map.compose(&spec.maps[i]),
                    depth + 1,
                    conductance * spec.rho[i],
                    mass * spec.measure_weights[i],
                ));
            }
        }
    }

    let edges = edge_order
        .into_iter()
        .map(|(a, b)| Edge::new(a, b, edges[&(a, b)]))
        .collect();
    let mut parts = SpaceParts::new(measure, edges, MetricSource::EffectiveResistance);
    parts.coordinates = Some(registry.points);
    parts.metadata = Metadata::new("pcf")
        .with_level(spec.level)
        .with_param("rho", spec.rho.clone())
        .with_param("resistance_dimension", spec.resistance_dimension);
    MetricMeasureSpace::new(parts)
}

fn dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Identifies points closer than `tol` using a hashed grid.
struct PointRegistry {
    tol: f64,
    cell: f64,
    grid: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl PointRegistry {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            cell: tol.max(f64::MIN_POSITIVE) * 1e3,
            grid: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    fn lookup_or_insert(&mut self, p: Vec<f64>, ambiguous: f64) -> Result<usize> {
        let key = self.key(&p);
        let mut found = None;
        for offset in neighbour_offsets(p.len()) {
            let probe: Vec<i64> = key.iter().zip(&offset).map(|(a, b)| a + b).collect();
            if let Some(ids) = self.grid.get(&probe) {
                for &id in ids {
                    let d = dist(&self.points[id], &p);
                    if d <= self.tol {
                        found = Some(id);
                    } else if d <= ambiguous.min(self.cell) {
                        return Err(Error::Construction(format!(
                            "points at distance {d:e} are neither identical nor separated: finite ramification fails at machine precision"
                        )));
                    }
                }
            }
        }
        if let Some(id) = found {
            return Ok(id);
        }
        let id = self.points.len();
        self.grid.entry(key).or_default().push(id);
        self.points.push(p);
        Ok(id)
    }
}

fn neighbour_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|o| {
                [-1i64, 0, 1].into_iter().map(move |d| {
                    let mut v = o.clone();
                    v.push(d);
                    v
                })
            })
            .collect();
    }
    out
}
