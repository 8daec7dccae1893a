use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{variance, UNIT_NORM_TOL};
use crate::linalg::compensated_sum;
use crate::space::{self, FunctionOnSpace, MetricMeasureSpace};

/// Quantities the growth-based proofs construct for a given unit `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProofTrace {
    /// Minimizer of `y -> sum_x d(x, y)^gamma u(x)^2 mu(x)`.
    pub y: usize,
    pub v: f64,
    /// `sup { s : int_{B_s(y)} u^2 < 1/2 }`
    pub r: f64,
    /// `r^gamma <= 2 v`
    pub radius_bound_holds: bool,
}

const BISECTION_TOL: f64 = 1e-9;

/// `sup { s : int_{B_s(y)} u^2 dmu < 1/2 }` by bisection on the
/// right-continuous ball mass, to absolute tolerance `1e-9`. Returns the
/// upper end of the final bracket, and 0 when `u^2 mu` at `y` alone already
/// reaches 1/2.
pub fn sup_radius(space: &MetricMeasureSpace, u: &FunctionOnSpace, y: usize) -> Result<f64> {
    u.check_aligned(space)?;
    space.check_vertex(y)?;
    let d = space.distance()?;
    let mu = space.measure();
    let row = d.row(y);
    let mass = |s: f64| {
        compensated_sum(
            (0..space.len())
                .filter(|&x| x == y || space::within(row[x], s))
                .map(|x| u[x] * u[x] * mu[x]),
        )
    };
    if mass(0.0) >= 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, d.diameter());
    if mass(hi) < 0.5 {
        return Err(Error::Precondition("u has less than half its mass in the space".into()));
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Replays the first steps of the growth-based proofs for `u`.
pub fn proof_trace(space: &MetricMeasureSpace, u: &FunctionOnSpace, gamma: f64) -> Result<ProofTrace> {
    let norm = space::l2_norm(space, u)?;
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Precondition(format!("proof trace needs ||u||_2 = 1, got {norm}")));
    }
    let v = variance(space, u, gamma)?;
    let d = space.distance()?;
    let mu = space.measure();
    let moment = |y: usize| {
        compensated_sum(
            d.row(y)
                .iter()
                .enumerate()
                .map(|(x, &dx)| if dx == 0.0 { 0.0 } else { dx.powf(gamma) * u[x] * u[x] * mu[x] }),
        )
    };
    let mut y = 0;
    let mut best = moment(0);
    for c in 1..space.len() {
        let m = moment(c);
        if m < best {
            best = m;
            y = c;
        }
    }
    let r = sup_radius(space, u, y)?;
    // the bracket end overshoots the true radius by at most the tolerance
    let r_low = (r - BISECTION_TOL).max(0.0);
    Ok(ProofTrace {
        y,
        v,
        r,
        radius_bound_holds: r_low.powf(gamma) <= 2.0 * v * (1.0 + 1e-12),
    })
}
