use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{energy_gradient_values, energy_values, moment_nash_functional, nash_functional};
use crate::linalg::compensated_sum;
use crate::space::{FunctionOnSpace, MetricMeasureSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NashVariant {
    /// `||f||_2^{2+4/theta} / (E ||f||_1^{4/theta})`
    Global,
    /// Global with `E + ||f||_2^2` in place of `E`.
    Local,
    /// `||f||_{2p}^{2p} / (E ||f||_2^{4/theta})`, `p = 1 + 2/theta`.
    Moment,
    LocalMoment,
}

impl NashVariant {
    pub fn is_local(&self) -> bool {
        matches!(self, NashVariant::Local | NashVariant::LocalMoment)
    }

    pub fn is_moment(&self) -> bool {
        matches!(self, NashVariant::Moment | NashVariant::LocalMoment)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NashVariant::Global => "global",
            NashVariant::Local => "local",
            NashVariant::Moment => "moment",
            NashVariant::LocalMoment => "local_moment",
        }
    }
}

impl fmt::Display for NashVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NashVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "global" => Ok(NashVariant::Global),
            "local" => Ok(NashVariant::Local),
            "moment" => Ok(NashVariant::Moment),
            "local_moment" => Ok(NashVariant::LocalMoment),
            other => Err(Error::Domain(format!("unknown Nash variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Point-mass starts are added for at most this many free vertices.
    pub point_starts: usize,
}

impl Default for NashOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            max_iters: 2000,
            tol: 1e-12,
            seed: 0,
            point_starts: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashEstimate {
    pub theta: f64,
    pub variant: NashVariant,
    pub c2_n: f64,
    /// A search only ever bounds a supremum from below.
    pub is_lower_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub maximizer: Option<FunctionOnSpace>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Objective<'a> {
    space: &'a MetricMeasureSpace,
    mu: &'a [f64],
    free: Vec<bool>,
    theta: f64,
    variant: NashVariant,
}

impl Objective<'_> {
    fn sum(&self, f: impl Fn(usize) -> f64) -> f64 {
        compensated_sum((0..self.mu.len()).map(f))
    }

    /// `log F(u)` and its gradient.
    fn log_value_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let (mu, theta) = (self.mu, self.theta);
        let n2 = self.sum(|x| u[x] * u[x] * mu[x]);
        let mut d = energy_values(self.space, u);
        let mut gd = energy_gradient_values(self.space, u);
        if self.variant.is_local() {
            d += n2;
            gd.iter_mut().enumerate().for_each(|(x, g)| *g += 2.0 * u[x] * mu[x]);
        }
        let (value, grad): (f64, Vec<f64>) = if self.variant.is_moment() {
            let p = 1.0 + 2.0 / theta;
            let s = self.sum(|x| u[x].abs().powf(2.0 * p) * mu[x]);
            let v = s.ln() - d.ln() - (2.0 / theta) * n2.ln();
            let g = (0..u.len())
                .map(|x| {
                    2.0 * p * u[x].abs().powf(2.0 * p - 2.0) * u[x] * mu[x] / s
                        - gd[x] / d
                        - (2.0 / theta) * 2.0 * u[x] * mu[x] / n2
                })
                .collect();
            (v, g)
        } else {
            let n1 = self.sum(|x| u[x].abs() * mu[x]);
            let v = (1.0 + 2.0 / theta) * n2.ln() - d.ln() - (4.0 / theta) * n1.ln();
            let g = (0..u.len())
                .map(|x| {
                    (1.0 + 2.0 / theta) * 2.0 * u[x] * mu[x] / n2
                        - gd[x] / d
                        - (4.0 / theta) * sign(u[x]) * mu[x] / n1
                })
                .collect();
            (v, g)
        };
        (value, grad)
    }

    fn project(&self, mut u: Vec<f64>) -> Option<Vec<f64>> {
        for (v, &f) in u.iter_mut().zip(&self.free) {
            if !f {
                *v = 0.0;
            }
        }
        let norm = self.sum(|x| u[x] * u[x] * self.mu[x]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        u.iter_mut().for_each(|v| *v /= norm);
        Some(u)
    }

    /// Ascent direction in the `mu` metric, tangent to the sphere.
    fn direction(&self, u: &[f64], g: &[f64]) -> Vec<f64> {
        let radial = self.sum(|x| g[x] * u[x]);
        (0..u.len())
            .map(|x| if self.free[x] { g[x] / self.mu[x] - radial * u[x] } else { 0.0 })
            .collect()
    }

    fn ascend(&self, start: Vec<f64>, opts: &NashOptions) -> (f64, Vec<f64>) {
        let mut u = start;
        let (mut h, mut g) = self.log_value_and_gradient(&u);
        let mut step = 1.0;
        for _ in 0..opts.max_iters {
            let dir = self.direction(&u, &g);
            let slope = self.sum(|x| dir[x] * dir[x] * self.mu[x]);
            if !(slope > 0.0) || !h.is_finite() {
                break;
            }
            let mut t = step;
            let mut accepted = None;
            while t > 1e-20 {
                let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                if let Some(trial) = self.project(trial) {
                    let (h2, g2) = self.log_value_and_gradient(&trial);
                    if h2.is_finite() && h2 >= h + 1e-4 * t * slope {
                        accepted = Some((trial, h2, g2));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((u2, h2, g2)) = accepted else { break };
            let gain = h2 - h;
            u = u2;
            h = h2;
            g = g2;
            // allow the step to grow back after backtracking
            step = (2.0 * t).min(1e6);
            if gain < opts.tol * h.abs().max(1.0) {
                break;
            }
        }
        (h, u)
    }
}

/// Multi-start ascent on the chosen Nash functional. The result is the best
/// value seen, a lower bound for the supremum.
pub fn estimate_nash_constant(
    space: &MetricMeasureSpace,
    theta: f64,
    variant: NashVariant,
    opts: &NashOptions,
) -> Result<NashEstimate> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let free: Vec<bool> = space.boundary_mask().iter().map(|b| !b).collect();
    let free_ids: Vec<usize> = (0..free.len()).filter(|&x| free[x]).collect();
    if free_ids.is_empty() {
        return Err(Error::DegenerateInput("every vertex is on the boundary".into()));
    }
    if !variant.is_local() && space.boundary().is_empty() {
        return Err(Error::DegenerateInput(format!(
            "constants have zero energy, so the {variant} Nash functional is unbounded; \
             use a local variant or a boundary"
        )));
    }
    let obj = Objective {
        space,
        mu: space.measure(),
        free,
        theta,
        variant,
    };
    let n = space.len();
    let mut starts: Vec<Vec<f64>> = free_ids
        .iter()
        .take(opts.point_starts)
        .map(|&x| {
            let mut u = vec![0.0; n];
            u[x] = 1.0;
            u
        })
        .collect();
    for i in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64 + 1);
        starts.push((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    let runs: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .filter_map(|s| obj.project(s))
        .map(|s| obj.ascend(s, opts))
        .collect();
    let (_, best) = runs
        .into_iter()
        .filter(|(h, _)| h.is_finite())
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .ok_or_else(|| Error::DegenerateInput("no start gave a finite Nash value".into()))?;
    let best = FunctionOnSpace::from_vec_unchecked(best);
    let value = if variant.is_moment() {
        moment_nash_functional(space, &best, theta, variant.is_local())?
    } else {
        nash_functional(space, &best, theta, variant.is_local())?
    };
    Ok(NashEstimate {
        theta,
        variant,
        c2_n: value,
        is_lower_bound: true,
        maximizer: Some(best),
    })
}
