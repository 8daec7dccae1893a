//! Hypothesis checks on a built space (volume growth, doubling, Poincaré and
//! Nash constants) and the lower-bound constants the theorems derive from
//! them.

mod nash;
mod poincare;
mod theorems;
mod trace;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{self, MetricMeasureSpace, MetricSource};

pub use nash::{estimate_nash_constant, NashEstimate, NashOptions, NashVariant};
pub use poincare::{estimate_poincare_constant, PoincareEstimate};
pub use theorems::{theorem_lower_bound, Theorem, TheoremParams};
pub use trace::{proof_trace, sup_radius, ProofTrace};

/// Spaces up to this size use every vertex as a ball center.
pub const ALL_CENTERS_MAX: usize = 500;
pub const SAMPLED_CENTERS: usize = 200;
pub const DEFAULT_RADIUS_RATIO: f64 = std::f64::consts::SQRT_2;

/// One `(center, r)` sample of the volume fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub center: usize,
    pub r: f64,
    pub mu_ball: f64,
    /// `mu_ball / r^b`
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub radius_range: (f64, f64),
    pub residuals: Vec<ResidualRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseDoubling {
    pub k: f64,
    pub c2_rd: f64,
}

impl ReverseDoubling {
    pub fn holds(&self) -> bool {
        self.c2_rd > 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub metric_source: MetricSource,
    pub b: f64,
    pub c1_growth: f64,
    pub c2_growth: f64,
    pub radius_range: (f64, f64),
    pub reverse_doubling: Option<ReverseDoubling>,
    pub doubling_c: Option<f64>,
    pub poincare: Option<PoincareEstimate>,
    pub nash: Vec<NashEstimate>,
    pub residuals: Vec<ResidualRow>,
}

impl HypothesisReport {
    pub fn from_fit(metric_source: MetricSource, fit: GrowthFit) -> Self {
        Self {
            metric_source,
            b: fit.b,
            c1_growth: fit.c1,
            c2_growth: fit.c2,
            radius_range: fit.radius_range,
            reverse_doubling: None,
            doubling_c: None,
            poincare: None,
            nash: Vec::new(),
            residuals: fit.residuals,
        }
    }

    pub fn nash_estimate(&self, theta: f64, variant: NashVariant) -> Option<&NashEstimate> {
        self.nash
            .iter()
            .find(|n| n.variant == variant && (n.theta - theta).abs() <= 1e-12 * theta.abs().max(1.0))
    }
}

/// What `verify` computes beyond the growth fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Defaults to [`default_centers`].
    pub centers: Option<Vec<usize>>,
    /// Defaults to [`default_radii`].
    pub radii: Option<Vec<f64>>,
    pub reverse_doubling_k: Option<f64>,
    pub doubling: bool,
    /// Poincaré exponent; `None` skips the estimate.
    pub poincare_gamma: Option<f64>,
    pub nash: Vec<(f64, NashVariant)>,
    pub nash_options: NashOptions,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            centers: None,
            radii: None,
            reverse_doubling_k: Some(2.0),
            doubling: true,
            poincare_gamma: None,
            nash: Vec::new(),
            nash_options: NashOptions::default(),
            seed: 0,
        }
    }
}

/// Every vertex when `n <= 500`, otherwise 200 distinct seeded vertices in
/// increasing order.
pub fn default_centers(space: &MetricMeasureSpace, seed: u64) -> Vec<usize> {
    let n = space.len();
    if n <= ALL_CENTERS_MAX {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, SAMPLED_CENTERS).into_vec();
    picked.sort_unstable();
    picked
}

/// Geometric grid with ratio `ratio` from the minimum vertex spacing up to
/// half the diameter. Spaces too small to fit three such radii get the grid
/// extended up to the full diameter.
pub fn default_radii(space: &MetricMeasureSpace, ratio: f64) -> Result<Vec<f64>> {
    if !(ratio > 1.0 && ratio.is_finite()) {
        return Err(Error::Domain(format!("radius ratio must exceed 1, got {ratio}")));
    }
    let d = space.distance()?;
    let lo = d.min_separation();
    let diam = d.diameter();
    if !(lo > 0.0) {
        return Err(Error::InsufficientData("space too small for a radius grid".into()));
    }
    let grid = |hi: f64| {
        let mut radii = Vec::new();
        let mut r = lo;
        // the 1e-12 slack keeps the top of the grid when it lands on hi exactly
        while r <= hi * (1.0 + 1e-12) {
            radii.push(r);
            r *= ratio;
        }
        radii
    };
    let radii = grid(diam / 2.0);
    if radii.len() >= 3 {
        return Ok(radii);
    }
    let radii = grid(diam);
    if radii.is_empty() {
        return Err(Error::InsufficientData("space too small for a radius grid".into()));
    }
    Ok(radii)
}

fn check_centers(space: &MetricMeasureSpace, centers: &[usize]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::InsufficientData("no centers".into()));
    }
    for &c in centers {
        space.check_vertex(c)?;
    }
    Ok(())
}

/// Ball masses `mu(B_r(center))` for every radius.
fn ball_masses(space: &MetricMeasureSpace, center: usize, radii: &[f64]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| space::ball_measure(space, center, r))
        .collect()
}

/// Least-squares slope of `log mu(B_r)` against `log r`, pooled over
/// centers, on radii from the minimum spacing up to the diameter.
pub fn fit_ahlfors_regularity(
    space: &MetricMeasureSpace,
    centers: &[usize],
    radii: &[f64],
) -> Result<GrowthFit> {
    check_centers(space, centers)?;
    let d = space.distance()?;
    let lo = d.min_separation();
    let diam = d.diameter();
    let usable: Vec<f64> = radii
        .iter()
        .copied()
        .filter(|&r| r > 0.0 && space::within(lo, r) && r <= diam)
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable radii between the vertex spacing {lo} and the diameter {diam}; need 3",
            usable.len()
        )));
    }
    let masses: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&c| ball_masses(space, c, &usable))
        .collect::<Result<_>>()?;

    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for row in &masses {
        for (&r, &m) in usable.iter().zip(row) {
            let (x, y) = (r.ln(), m.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            count += 1.0;
        }
    }
    let denom = count * sxx - sx * sx;
    if !(denom > 0.0) {
        return Err(Error::InsufficientData("radii do not vary".into()));
    }
    let b = (count * sxy - sx * sy) / denom;

    let mut residuals = Vec::with_capacity(centers.len() * usable.len());
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for (&c, row) in centers.iter().zip(&masses) {
        for (&r, &m) in usable.iter().zip(row) {
            let ratio = m / r.powf(b);
            c1 = c1.min(ratio);
            c2 = c2.max(ratio);
            residuals.push(ResidualRow {
                center: c,
                r,
                mu_ball: m,
                ratio,
            });
        }
    }
    Ok(GrowthFit {
        b,
        c1,
        c2,
        radius_range: (usable[0], usable[usable.len() - 1]),
        residuals,
    })
}

/// Smallest `mu(B_{kr}) / mu(B_r)` over centers and admissible radii
/// (`r` at least the vertex spacing, `kr` at most the diameter).
pub fn check_reverse_doubling(
    space: &MetricMeasureSpace,
    k: f64,
    centers: &[usize],
    radii: &[f64],
) -> Result<f64> {
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::Domain(format!("k must exceed 1, got {k}")));
    }
    check_centers(space, centers)?;
    let d = space.distance()?;
    let lo = d.min_separation();
    let diam = d.diameter();
    let admissible: Vec<f64> = radii
        .iter()
        .copied()
        .filter(|&r| r > 0.0 && space::within(lo, r) && k * r <= diam * (1.0 + 1e-12))
        .collect();
    if admissible.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no radius with spacing {lo} <= r and {k} r <= diameter {diam}"
        )));
    }
    ratio_extremum(space, centers, &admissible, k, f64::min, f64::INFINITY)
}

/// Largest `mu(B_{2r}) / mu(B_r)` over centers and radii in `(0, diameter]`.
pub fn check_doubling(space: &MetricMeasureSpace, centers: &[usize], radii: &[f64]) -> Result<f64> {
    check_centers(space, centers)?;
    let diam = space.distance()?.diameter();
    let admissible: Vec<f64> = radii.iter().copied().filter(|&r| r > 0.0 && r <= diam).collect();
    if admissible.is_empty() {
        return Err(Error::InsufficientData("no radius in (0, diameter]".into()));
    }
    ratio_extremum(space, centers, &admissible, 2.0, f64::max, 0.0)
}

fn ratio_extremum(
    space: &MetricMeasureSpace,
    centers: &[usize],
    radii: &[f64],
    k: f64,
    pick: fn(f64, f64) -> f64,
    init: f64,
) -> Result<f64> {
    let per_center: Vec<f64> = centers
        .par_iter()
        .map(|&c| {
            let mut acc = init;
            for &r in radii {
                let small = space::ball_measure(space, c, r)?;
                let big = space::ball_measure(space, c, k * r)?;
                acc = pick(acc, big / small);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(per_center.into_iter().fold(init, pick))
}

/// Runs the growth fit and the checks selected in `opts`.
pub fn verify(space: &MetricMeasureSpace, opts: &VerifyOptions) -> Result<HypothesisReport> {
    let centers = match &opts.centers {
        Some(c) => c.clone(),
        None => default_centers(space, opts.seed),
    };
    let radii = match &opts.radii {
        Some(r) => r.clone(),
        None => default_radii(space, DEFAULT_RADIUS_RATIO)?,
    };
    let fit = fit_ahlfors_regularity(space, &centers, &radii)?;
    let mut report = HypothesisReport::from_fit(space.metric_source(), fit);
    if let Some(k) = opts.reverse_doubling_k {
        let c2_rd = check_reverse_doubling(space, k, &centers, &radii)?;
        report.reverse_doubling = Some(ReverseDoubling { k, c2_rd });
    }
    if opts.doubling {
        report.doubling_c = Some(check_doubling(space, &centers, &radii)?);
    }
    if let Some(gamma) = opts.poincare_gamma {
        report.poincare = Some(estimate_poincare_constant(space, gamma, &centers, &radii)?);
    }
    for &(theta, variant) in &opts.nash {
        let mut est = estimate_nash_constant(space, theta, variant, &opts.nash_options)?;
        // the maximizer is for diagnostics; reports keep the number
        est.maximizer = None;
        report.nash.push(est);
    }
    Ok(report)
}
