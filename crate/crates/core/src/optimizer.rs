//! Minimization of the uncertainty product over the unit sphere of
//! `L^2(mu)`, with vertex values pinned to zero on the boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{energy_gradient_values, energy_values, ProductVariant, VarianceKernel};
use crate::linalg::compensated_sum;
use crate::space::{FunctionOnSpace, MetricMeasureSpace};

/// Below this energy a minimizer is treated as a constant.
pub const DEGENERATE_ENERGY: f64 = 1e-12;

pub const DEGENERATE_CONSTANTS: &str = "degenerate: constants admissible";

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-24;
const STOP_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Random starts; one structured start is always added.
    pub starts: usize,
    pub max_iters: usize,
    /// Stop when the decrease of one step, relative to `max(|f|, 1e-6)`,
    /// falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            starts: 32,
            max_iters: 5000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyResult {
    pub variant: ProductVariant,
    pub gamma: f64,
    pub minimizer: FunctionOnSpace,
    pub product: f64,
    pub variance: f64,
    pub energy: f64,
    pub theorem_bound: Option<f64>,
    pub gap_ratio: Option<f64>,
    pub starts_used: usize,
    /// Index of the winning start; 0 is the structured start.
    pub best_start: usize,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub flags: Vec<String>,
}

impl UncertaintyResult {
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.theorem_bound = Some(bound);
        self.gap_ratio = Some(self.product / bound);
        self
    }

    pub fn is_degenerate(&self) -> bool {
        self.flags.iter().any(|f| f == DEGENERATE_CONSTANTS)
    }
}

/// Product evaluation with the boundary constraint built in.
struct Problem<'a> {
    space: &'a MetricMeasureSpace,
    mu: &'a [f64],
    free: Vec<bool>,
    kernel: VarianceKernel,
    variant: ProductVariant,
}

struct Point {
    u: Vec<f64>,
    f: f64,
    var: f64,
    e: f64,
    dw: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(space: &'a MetricMeasureSpace, gamma: f64, variant: ProductVariant) -> Result<Self> {
        let free: Vec<bool> = space.boundary_mask().iter().map(|b| !b).collect();
        if !free.iter().any(|&f| f) {
            return Err(Error::DegenerateInput(
                "every vertex is on the boundary: no admissible nonzero function".into(),
            ));
        }
        Ok(Self {
            space,
            mu: space.measure(),
            free,
            kernel: VarianceKernel::new(space, gamma)?,
            variant,
        })
    }

    /// Projects onto the constraint set: zero on the boundary, unit norm.
    fn project(&self, mut u: Vec<f64>) -> Option<Vec<f64>> {
        for (v, &f) in u.iter_mut().zip(&self.free) {
            if !f {
                *v = 0.0;
            }
        }
        let norm = compensated_sum(u.iter().zip(self.mu).map(|(v, m)| v * v * m)).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        u.iter_mut().for_each(|v| *v /= norm);
        Some(u)
    }

    fn eval(&self, u: Vec<f64>) -> Point {
        let w: Vec<f64> = u.iter().zip(self.mu).map(|(v, m)| v * v * m).collect();
        let dw = self.kernel.apply(&w);
        let var = compensated_sum(w.iter().zip(&dw).map(|(a, b)| a * b));
        let e = energy_values(self.space, &u);
        Point {
            f: self.variant.combine(var, e),
            u,
            var,
            e,
            dw,
        }
    }

    /// Riemannian gradient on the `mu`-weighted sphere, zero on the boundary.
    fn riemannian_gradient(&self, p: &Point) -> Vec<f64> {
        let ge = energy_gradient_values(self.space, &p.u);
        let (pv, pe) = self.variant.partials(p.var, p.e);
        let g: Vec<f64> = (0..p.u.len())
            .map(|x| {
                if self.free[x] {
                    pv * 4.0 * self.mu[x] * p.u[x] * p.dw[x] + pe * ge[x]
                } else {
                    0.0
                }
            })
            .collect();
        let radial = compensated_sum(g.iter().zip(&p.u).map(|(a, b)| a * b));
        (0..g.len())
            .map(|x| {
                if self.free[x] {
                    g[x] / self.mu[x] - radial * p.u[x]
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn descend(&self, start: Vec<f64>, opts: &OptimizerOptions) -> (Point, usize, bool) {
        let mut p = self.eval(start);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for it in 0..opts.max_iters {
            let g = self.riemannian_gradient(&p);
            let gnorm2 = self.inner(&g, &g);
            if !(gnorm2 > 0.0) {
                return (p, it, true);
            }
            let mut t = match &prev {
                Some((u0, g0)) => self.bb_step(u0, g0, &p.u, &g),
                None => 1.0,
            };
            let next = loop {
                let trial: Vec<f64> = p.u.iter().zip(&g).map(|(u, d)| u - t * d).collect();
                if let Some(trial) = self.project(trial) {
                    let q = self.eval(trial);
                    if q.f <= p.f - ARMIJO_C * t * gnorm2 {
                        break Some(q);
                    }
                }
                t *= BACKTRACK;
                if t < MIN_STEP {
                    break None;
                }
            };
            let Some(q) = next else {
                // no descent left at working precision
                return (p, it, true);
            };
            let decrease = p.f - q.f;
            // relative above the floor, absolute below it: a product decaying
            // geometrically to zero would otherwise never stop
            let scale = p.f.abs().max(STOP_FLOOR);
            prev = Some((std::mem::replace(&mut p, q).u, g));
            if decrease / scale < opts.tol {
                return (p, it + 1, true);
            }
        }
        (p, opts.max_iters, false)
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        compensated_sum(a.iter().zip(b).zip(self.mu).map(|((x, y), m)| x * y * m))
    }

    /// Barzilai-Borwein trial step from the last two iterates, falling back
    /// to 1 when the curvature estimate is not positive.
    fn bb_step(&self, u0: &[f64], g0: &[f64], u1: &[f64], g1: &[f64]) -> f64 {
        let s: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g1.iter().zip(g0).map(|(a, b)| a - b).collect();
        let sy = self.inner(&s, &y);
        let ss = self.inner(&s, &s);
        if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            1.0
        }
    }

    fn random_start(&self, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = start_rng(seed, stream);
        let n = self.mu.len();
        loop {
            let u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Some(u) = self.project(u) {
                return u;
            }
        }
    }

    /// Distance to the boundary, or a constant when there is none.
    fn structured_start(&self) -> Result<Vec<f64>> {
        let n = self.mu.len();
        let boundary = self.space.boundary();
        let u = if boundary.is_empty() {
            vec![1.0; n]
        } else {
            let d = self.space.distance()?;
            (0..n)
                .map(|x| boundary.iter().map(|&b| d.get(x, b)).fold(f64::INFINITY, f64::min))
                .collect()
        };
        self.project(u)
            .ok_or_else(|| Error::DegenerateInput("structured start vanishes".into()))
    }
}

fn start_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Makes the largest-magnitude entry positive.
fn fix_sign(u: &mut [f64]) {
    let mut best = 0;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() {
            best = i;
        }
    }
    if u.get(best).is_some_and(|v| *v < 0.0) {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Multi-start projected gradient descent for the uncertainty product.
pub fn minimize_product(
    space: &MetricMeasureSpace,
    gamma: f64,
    variant: ProductVariant,
    opts: &OptimizerOptions,
) -> Result<UncertaintyResult> {
    if opts.max_iters == 0 {
        return Err(Error::Domain("max_iters must be positive".into()));
    }
    let problem = Problem::new(space, gamma, variant)?;
    let structured = problem.structured_start()?;
    let runs: Vec<(Point, usize, bool)> = (0..=opts.starts)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                structured.clone()
            } else {
                problem.random_start(opts.seed, i as u64)
            };
            problem.descend(start, opts)
        })
        .collect();

    let (best_start, (best, iterations, converged)) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.0.f.total_cmp(&b.0.f).then(i.cmp(j)))
        .expect("at least one start");

    let mut flags = Vec::new();
    if variant.vanishes_with_energy() && best.e < DEGENERATE_ENERGY {
        flags.push(DEGENERATE_CONSTANTS.to_string());
    }
    let mut u = best.u;
    fix_sign(&mut u);
    Ok(UncertaintyResult {
        variant,
        gamma,
        minimizer: FunctionOnSpace::from_vec_unchecked(u),
        product: best.f.max(0.0),
        variance: best.var,
        energy: best.e,
        theorem_bound: None,
        gap_ratio: None,
        starts_used: opts.starts + 1,
        best_start,
        iterations,
        converged,
        seed: opts.seed,
        flags,
    })
}

/// Maximum number of free vertices `brute_force_min` accepts.
pub const BRUTE_FORCE_MAX_FREE: usize = 3;

/// Exhaustive grid search over the unit sphere of the free vertices.
///
/// Writing `u(x) = s_x / sqrt(mu(x))` maps the `mu`-sphere to the Euclidean
/// unit sphere in the free coordinates, which is parametrized by angles. The
/// objective is even, so half the sphere suffices.
pub fn brute_force_min(
    space: &MetricMeasureSpace,
    gamma: f64,
    variant: ProductVariant,
    grid_points: usize,
) -> Result<(f64, FunctionOnSpace)> {
    let free = space.free_vertices();
    if free.len() > BRUTE_FORCE_MAX_FREE {
        return Err(Error::Capacity {
            requested: free.len(),
            cap: BRUTE_FORCE_MAX_FREE,
        });
    }
    if grid_points == 0 {
        return Err(Error::Domain("grid_points must be positive".into()));
    }
    let problem = Problem::new(space, gamma, variant)?;
    let mu = space.measure();
    let n = space.len();
    let lift = |s: &[f64]| {
        let mut u = vec![0.0; n];
        for (&x, &sx) in free.iter().zip(s) {
            u[x] = sx / mu[x].sqrt();
        }
        u
    };
    let pi = std::f64::consts::PI;
    let directions: Vec<Vec<f64>> = match free.len() {
        1 => vec![vec![1.0]],
        2 => (0..grid_points)
            .map(|j| {
                let t = pi * j as f64 / grid_points as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => (0..=grid_points)
            .flat_map(|i| {
                let theta = pi * i as f64 / grid_points as f64;
                (0..grid_points).map(move |j| {
                    let phi = pi * j as f64 / grid_points as f64;
                    vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
                })
            })
            .collect(),
    };
    let (idx, f) = directions
        .par_iter()
        .enumerate()
        .map(|(i, s)| (i, problem.eval(lift(s)).f))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("non-empty grid");
    let mut u = lift(&directions[idx]);
    fix_sign(&mut u);
    Ok((f.max(0.0), FunctionOnSpace::from_vec_unchecked(u)))
}

/// Smallest product over `count` random boundary-respecting unit functions.
/// Sample `i` uses the same stream as the optimizer's random start `i + 1`.
pub fn sample_baseline(
    space: &MetricMeasureSpace,
    gamma: f64,
    variant: ProductVariant,
    count: usize,
    seed: u64,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let problem = Problem::new(space, gamma, variant)?;
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| problem.eval(problem.random_start(seed, i as u64 + 1)).f)
        .collect();
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Edge, MetricSource, SpaceParts};
    use approx::assert_relative_eq;

    fn two_point() -> MetricMeasureSpace {
        MetricMeasureSpace::new(SpaceParts::new(
            vec![0.5, 0.5],
            vec![Edge::new(0, 1, 1.0)],
            MetricSource::EffectiveResistance,
        ))
        .unwrap()
    }

    #[test]
    fn sign_is_fixed_by_largest_entry() {
        let mut u = vec![0.1, -0.9, 0.3];
        fix_sign(&mut u);
        assert_eq!(u, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn constants_are_flagged() {
        let s = two_point();
        let r = minimize_product(&s, 2.0, ProductVariant::Unbounded, &OptimizerOptions::default()).unwrap();
        assert!(r.product <= 1e-10);
        assert!(r.is_degenerate());
        let r = minimize_product(&s, 2.0, ProductVariant::BoundedEnergy, &OptimizerOptions::default()).unwrap();
        assert!(!r.is_degenerate());
    }

    #[test]
    fn all_boundary_is_rejected() {
        let s = two_point().with_boundary(vec![0, 1]).unwrap();
        assert!(matches!(
            minimize_product(&s, 2.0, ProductVariant::Unbounded, &OptimizerOptions::default()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn minimizer_has_unit_norm() {
        let s = two_point();
        let r = minimize_product(&s, 2.0, ProductVariant::BoundedEnergy, &OptimizerOptions::default()).unwrap();
        let norm = crate::space::l2_norm(&s, &r.minimizer).unwrap();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn baseline_rejects_zero_count() {
        assert!(sample_baseline(&two_point(), 2.0, ProductVariant::Unbounded, 0, 1).is_err());
    }
}
