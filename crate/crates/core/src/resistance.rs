//! Effective resistance metric of the energy form.
//!
//! `R(x, y)` is the supremum of `1 / E(u, u)` over `u` with `u(x) = 1`,
//! `u(y) = 0`. On a finite graph the supremum is attained by the harmonic
//! potential, which we get from one grounded Laplacian solve.

use crate::error::{Error, Result};
use crate::functionals::energy_values;
use crate::linalg::{GroundedSolver, SolverOptions};
use crate::space::{DistanceMatrix, FunctionOnSpace, MetricMeasureSpace};

/// All-pairs effective resistances.
#[derive(Clone, Debug, PartialEq)]
pub struct ResistanceMatrix(DistanceMatrix);

impl ResistanceMatrix {
    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn as_distance(&self) -> &DistanceMatrix {
        &self.0
    }

    pub fn into_distance(self) -> DistanceMatrix {
        self.0
    }
}

pub fn effective_resistance(space: &MetricMeasureSpace, x: usize, y: usize) -> Result<f64> {
    effective_resistance_with(space, x, y, 0, SolverOptions::default())
}

/// Effective resistance with an explicit reference (ground) vertex.
pub fn effective_resistance_with(
    space: &MetricMeasureSpace,
    x: usize,
    y: usize,
    ground: usize,
    opts: SolverOptions,
) -> Result<f64> {
    space.check_vertex(x)?;
    space.check_vertex(y)?;
    if x == y {
        return Ok(0.0);
    }
    let solver = GroundedSolver::new(space, ground, opts)?;
    let mut rhs = vec![0.0; space.len()];
    rhs[x] += 1.0;
    rhs[y] -= 1.0;
    let v = solver.solve(&rhs)?;
    let r = v[x] - v[y];
    if !r.is_finite() {
        return Err(Error::Disconnected(x, y));
    }
    Ok(r)
}

pub fn resistance_matrix(space: &MetricMeasureSpace) -> Result<ResistanceMatrix> {
    resistance_matrix_with(space, 0, SolverOptions::default())
}

pub fn resistance_matrix_with(
    space: &MetricMeasureSpace,
    ground: usize,
    opts: SolverOptions,
) -> Result<ResistanceMatrix> {
    let solver = GroundedSolver::new(space, ground, opts)?;
    let z = solver.green_matrix()?;
    let n = space.len();
    let d = DistanceMatrix::from_fn(n, |i, j| {
        // clamp roundoff below zero
        (z[(i, i)] + z[(j, j)] - 2.0 * z[(i, j)]).max(0.0)
    });
    Ok(ResistanceMatrix(d))
}

/// The harmonic potential with `u(x) = 1`, `u(y) = 0`: the extremizer of the
/// resistance variational problem.
pub fn harmonic_potential(space: &MetricMeasureSpace, x: usize, y: usize) -> Result<FunctionOnSpace> {
    space.check_vertex(x)?;
    space.check_vertex(y)?;
    if x == y {
        return Err(Error::Domain("potential needs two distinct vertices".into()));
    }
    let solver = GroundedSolver::new(space, y, SolverOptions::default())?;
    let mut rhs = vec![0.0; space.len()];
    rhs[x] = 1.0;
    let v = solver.solve(&rhs)?;
    let scale = 1.0 / v[x];
    Ok(FunctionOnSpace::from_vec_unchecked(v.iter().map(|a| a * scale).collect()))
}

/// `(u(x) - u(y))^2 / E(u, u)`, bounded above by `R(x, y)`.
pub fn resistance_witness_ratio(
    space: &MetricMeasureSpace,
    x: usize,
    y: usize,
    u: &FunctionOnSpace,
) -> Result<f64> {
    u.check_aligned(space)?;
    space.check_vertex(x)?;
    space.check_vertex(y)?;
    let e = energy_values(space, u.values());
    if e <= 0.0 {
        return Err(Error::DegenerateInput("function has zero energy".into()));
    }
    let diff = u[x] - u[y];
    Ok(diff * diff / e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Edge, MetricSource, SpaceParts};
    use approx::assert_relative_eq;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> MetricMeasureSpace {
        MetricMeasureSpace::new(SpaceParts::new(
            vec![1.0; n],
            edges.iter().map(|&(a, b, c)| Edge::new(a, b, c)).collect(),
            MetricSource::EffectiveResistance,
        ))
        .unwrap()
    }

    #[test]
    fn single_edge_is_ohms_law() {
        let s = graph(2, &[(0, 1, 4.0)]);
        assert_relative_eq!(effective_resistance(&s, 0, 1).unwrap(), 0.25, epsilon = 1e-14);
        let m = resistance_matrix(&s).unwrap();
        assert_relative_eq!(m.get(0, 1), 0.25, epsilon = 1e-14);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn path_is_series() {
        let edges: Vec<_> = (0..6).map(|i| (i, i + 1, 1.0)).collect();
        let s = graph(7, &edges);
        for k in 0..7 {
            assert_relative_eq!(effective_resistance(&s, 0, k).unwrap(), k as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn triangle_is_two_thirds() {
        let s = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        for (x, y) in [(0, 1), (1, 2), (0, 2)] {
            assert_relative_eq!(effective_resistance(&s, x, y).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grounding_and_backend_do_not_matter() {
        let s = graph(
            5,
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.5), (4, 0, 1.0), (1, 3, 3.0)],
        );
        let iterative = SolverOptions {
            direct_max: 0,
            ..Default::default()
        };
        let reference = resistance_matrix(&s).unwrap();
        for g in 0..5 {
            let m = resistance_matrix_with(&s, g, SolverOptions::default()).unwrap();
            let it = resistance_matrix_with(&s, g, iterative).unwrap();
            for x in 0..5 {
                for y in 0..5 {
                    assert_relative_eq!(m.get(x, y), reference.get(x, y), epsilon = 1e-12);
                    assert_relative_eq!(it.get(x, y), reference.get(x, y), epsilon = 1e-9);
                    let pair = effective_resistance_with(&s, x, y, g, SolverOptions::default()).unwrap();
                    assert_relative_eq!(pair, reference.get(x, y), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn potential_attains_the_resistance() {
        let s = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 2, 2.0)]);
        let u = harmonic_potential(&s, 0, 3).unwrap();
        assert_relative_eq!(u[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(u[3], 0.0, epsilon = 1e-14);
        let ratio = resistance_witness_ratio(&s, 0, 3, &u).unwrap();
        assert_relative_eq!(ratio, effective_resistance(&s, 0, 3).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn witness_rejects_constants() {
        let s = graph(2, &[(0, 1, 1.0)]);
        let c = FunctionOnSpace::constant(2, 1.0);
        assert!(matches!(
            resistance_witness_ratio(&s, 0, 1, &c),
            Err(Error::DegenerateInput(_))
        ));
    }
}
