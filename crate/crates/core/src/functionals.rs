//! Quadratic functionals: energy, spatial variance, uncertainty products,
//! Poincaré and Nash quotients, and the gradients the optimizers need.
//!
//! All norms are measure weighted: `||u||_p^p = sum |u(x)|^p mu(x)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, CompensatedSum};
use crate::space::{self, Ball, FunctionOnSpace, MetricMeasureSpace};

/// Tolerance on `||u||_2 = 1` for products.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Which product the weak uncertainty inequality bounds from below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductVariant {
    /// `Var(u) * E(u, u)`
    Unbounded,
    /// `Var(u) * (E(u, u) + 1)`
    BoundedEnergy,
    /// `(Var(u) + 1) * E(u, u)`
    BoundedVariance,
}

impl ProductVariant {
    pub const ALL: [ProductVariant; 3] = [
        ProductVariant::Unbounded,
        ProductVariant::BoundedEnergy,
        ProductVariant::BoundedVariance,
    ];

    pub fn combine(&self, var: f64, energy: f64) -> f64 {
        match self {
            ProductVariant::Unbounded => var * energy,
            ProductVariant::BoundedEnergy => var * (energy + 1.0),
            ProductVariant::BoundedVariance => (var + 1.0) * energy,
        }
    }

    /// Partial derivatives of the product with respect to `(Var, E)`.
    pub fn partials(&self, var: f64, energy: f64) -> (f64, f64) {
        match self {
            ProductVariant::Unbounded => (energy, var),
            ProductVariant::BoundedEnergy => (energy + 1.0, var),
            ProductVariant::BoundedVariance => (energy, var + 1.0),
        }
    }

    /// Whether the product vanishes with the energy, so that constants are
    /// minimizers whenever they are admissible.
    pub fn vanishes_with_energy(&self) -> bool {
        !matches!(self, ProductVariant::BoundedEnergy)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProductVariant::Unbounded => "unbounded",
            ProductVariant::BoundedEnergy => "bounded_energy",
            ProductVariant::BoundedVariance => "bounded_variance",
        }
    }
}

impl fmt::Display for ProductVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProductVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "unbounded" => Ok(ProductVariant::Unbounded),
            "bounded_energy" => Ok(ProductVariant::BoundedEnergy),
            "bounded_variance" => Ok(ProductVariant::BoundedVariance),
            other => Err(Error::Domain(format!("unknown product variant '{other}'"))),
        }
    }
}

pub fn energy(space: &MetricMeasureSpace, u: &FunctionOnSpace) -> Result<f64> {
    u.check_aligned(space)?;
    Ok(energy_values(space, u.values()))
}

pub(crate) fn energy_values(space: &MetricMeasureSpace, u: &[f64]) -> f64 {
    compensated_sum(space.edges().iter().map(|e| {
        let d = u[e.a] - u[e.b];
        e.conductance * d * d
    }))
}

pub(crate) fn energy_gradient_values(space: &MetricMeasureSpace, u: &[f64]) -> Vec<f64> {
    space
        .adjacency()
        .iter()
        .enumerate()
        .map(|(x, nbrs)| 2.0 * nbrs.iter().map(|&(y, c)| c * (u[x] - u[y])).sum::<f64>())
        .collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Precomputed `d(x, y)^gamma` for repeated variance evaluations.
#[derive(Clone, Debug)]
pub struct VarianceKernel {
    n: usize,
    gamma: f64,
    powered: Vec<f64>,
}

const PARALLEL_ROWS: usize = 64;

impl VarianceKernel {
    pub fn new(space: &MetricMeasureSpace, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let d = space.distance()?;
        let n = d.n();
        let mut powered = Vec::with_capacity(n * n);
        for row in d.rows() {
            powered.extend(row.iter().map(|&v| if v == 0.0 { 0.0 } else { v.powf(gamma) }));
        }
        Ok(Self { n, gamma, powered })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn row(&self, x: usize) -> &[f64] {
        &self.powered[x * self.n..(x + 1) * self.n]
    }

    /// Variance from the weights `w(x) = u(x)^2 mu(x)`. Rows are reduced with
    /// compensated sums and merged in row order, so the result does not
    /// depend on how rows are partitioned across threads.
    pub fn value_from_weights(&self, w: &[f64]) -> f64 {
        let row_sum = |x: usize| {
            let mut acc = CompensatedSum::new();
            if w[x] != 0.0 {
                for (dy, wy) in self.row(x).iter().zip(w) {
                    acc.add(dy * wy * w[x]);
                }
            }
            acc
        };
        let partials: Vec<CompensatedSum> = if self.n >= PARALLEL_ROWS {
            (0..self.n).into_par_iter().map(row_sum).collect()
        } else {
            (0..self.n).map(row_sum).collect()
        };
        let mut total = CompensatedSum::new();
        for p in partials {
            total.merge(p);
        }
        total.value()
    }

    /// `D w` where `D` is the powered distance matrix.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|x| self.row(x).iter().zip(w).map(|(d, wy)| d * wy).sum())
            .collect()
    }

    /// Variance and its gradient with respect to `u`.
    pub fn value_and_gradient(&self, mu: &[f64], u: &[f64]) -> (f64, Vec<f64>) {
        let w: Vec<f64> = u.iter().zip(mu).map(|(v, m)| v * v * m).collect();
        let dw = self.apply(&w);
        let value = compensated_sum(w.iter().zip(&dw).map(|(a, b)| a * b));
        let grad = (0..self.n).map(|x| 4.0 * mu[x] * u[x] * dw[x]).collect();
        (value, grad)
    }
}

/// Spatial variance `sum_x sum_y d(x,y)^gamma u(x)^2 u(y)^2 mu(x) mu(y)`.
pub fn variance(space: &MetricMeasureSpace, u: &FunctionOnSpace, gamma: f64) -> Result<f64> {
    u.check_aligned(space)?;
    let kernel = VarianceKernel::new(space, gamma)?;
    Ok(kernel.value_from_weights(&weights(space.measure(), u.values())))
}

pub(crate) fn weights(mu: &[f64], u: &[f64]) -> Vec<f64> {
    u.iter().zip(mu).map(|(v, m)| v * v * m).collect()
}

fn check_unit(space: &MetricMeasureSpace, u: &FunctionOnSpace) -> Result<()> {
    let norm = space::l2_norm(space, u)?;
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Precondition(format!(
            "uncertainty products need ||u||_2 = 1, got {norm}"
        )));
    }
    Ok(())
}

pub fn uncertainty_product(
    space: &MetricMeasureSpace,
    u: &FunctionOnSpace,
    gamma: f64,
    variant: ProductVariant,
) -> Result<f64> {
    check_unit(space, u)?;
    let var = variance(space, u, gamma)?;
    let e = energy_values(space, u.values());
    Ok(variant.combine(var, e))
}

fn positive_energy(space: &MetricMeasureSpace, u: &FunctionOnSpace) -> Result<f64> {
    u.check_aligned(space)?;
    let e = energy_values(space, u.values());
    if e <= 0.0 {
        return Err(Error::DegenerateInput("function has zero energy".into()));
    }
    Ok(e)
}

/// `sum_{x in B} (u(x) - mean_B u)^2 mu(x) / E(u, u)`.
pub fn poincare_quotient(space: &MetricMeasureSpace, u: &FunctionOnSpace, ball: &Ball) -> Result<f64> {
    let e = positive_energy(space, u)?;
    let mu = space.measure();
    let mean = space::average_over(mu, u.values(), &ball.members);
    let num = compensated_sum(ball.members.iter().map(|&x| {
        let d = u[x] - mean;
        d * d * mu[x]
    }));
    Ok(num / e)
}

/// `sum_{x in B_r(center)} (u(x) - u_r(x))^2 mu(x) / E(u, u)` with `u_r` the
/// local average at scale `r`.
pub fn modified_poincare_quotient(
    space: &MetricMeasureSpace,
    u: &FunctionOnSpace,
    r: f64,
    center: usize,
) -> Result<f64> {
    let e = positive_energy(space, u)?;
    let local = space::local_average_function(space, u, r)?;
    let b = space::ball(space, center, r)?;
    let mu = space.measure();
    let num = compensated_sum(b.members.iter().map(|&x| {
        let d = u[x] - local[x];
        d * d * mu[x]
    }));
    Ok(num / e)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    Ok(())
}

/// Measure-weighted `||u||_p`.
pub fn lp_norm(space: &MetricMeasureSpace, u: &FunctionOnSpace, p: f64) -> Result<f64> {
    u.check_aligned(space)?;
    Ok(lp_norm_values(space.measure(), u.values(), p))
}

pub(crate) fn lp_norm_values(mu: &[f64], u: &[f64], p: f64) -> f64 {
    compensated_sum(u.iter().zip(mu).map(|(v, m)| v.abs().powf(p) * m)).powf(1.0 / p)
}

/// `||u||_2^{2+4/theta} / (E * ||u||_1^{4/theta})`, with `E + ||u||_2^2` in
/// the denominator when `local` is set.
pub fn nash_functional(
    space: &MetricMeasureSpace,
    u: &FunctionOnSpace,
    theta: f64,
    local: bool,
) -> Result<f64> {
    check_theta(theta)?;
    u.check_aligned(space)?;
    let mu = space.measure();
    let l2 = lp_norm_values(mu, u.values(), 2.0);
    if l2 == 0.0 {
        return Err(Error::DegenerateInput("zero function".into()));
    }
    let l1 = lp_norm_values(mu, u.values(), 1.0);
    let mut e = energy_values(space, u.values());
    if local {
        e += l2 * l2;
    }
    if e <= 0.0 {
        return Err(Error::DegenerateInput("zero denominator: function has zero energy".into()));
    }
    let q = 4.0 / theta;
    // ratios of norms first, to keep the degree-0 homogeneity exact
    Ok((l2 / l1).powf(q) * l2 * l2 / e)
}

/// `||u||_{2p}^{2p} / (E * ||u||_2^{4/theta})` with `p = 1 + 2/theta`, and
/// `E + ||u||_2^2` in the denominator when `local` is set.
pub fn moment_nash_functional(
    space: &MetricMeasureSpace,
    u: &FunctionOnSpace,
    theta: f64,
    local: bool,
) -> Result<f64> {
    check_theta(theta)?;
    u.check_aligned(space)?;
    let mu = space.measure();
    let l2 = lp_norm_values(mu, u.values(), 2.0);
    if l2 == 0.0 {
        return Err(Error::DegenerateInput("zero function".into()));
    }
    let p = 1.0 + 2.0 / theta;
    let lhigh = lp_norm_values(mu, u.values(), 2.0 * p);
    let mut e = energy_values(space, u.values());
    if local {
        e += l2 * l2;
    }
    if e <= 0.0 {
        return Err(Error::DegenerateInput("zero denominator: function has zero energy".into()));
    }
    // ||u||_{2p}^{2p} / ||u||_2^{4/theta} = (lhigh / l2)^{2p} * l2^2
    Ok((lhigh / l2).powf(2.0 * p) * l2 * l2 / e)
}

/// Energy and variance gradients with respect to the vertex values.
pub fn gradients(
    space: &MetricMeasureSpace,
    u: &FunctionOnSpace,
    gamma: f64,
) -> Result<(FunctionOnSpace, FunctionOnSpace)> {
    u.check_aligned(space)?;
    let kernel = VarianceKernel::new(space, gamma)?;
    let eg = energy_gradient_values(space, u.values());
    let (_, vg) = kernel.value_and_gradient(space.measure(), u.values());
    Ok((
        FunctionOnSpace::from_vec_unchecked(eg),
        FunctionOnSpace::from_vec_unchecked(vg),
    ))
}
