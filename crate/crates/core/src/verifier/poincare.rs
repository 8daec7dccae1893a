use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{GroundedSolver, SolverOptions};
use crate::space::{self, MetricMeasureSpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareEstimate {
    pub gamma: f64,
    pub c1_p: f64,
    /// Ball attaining the maximum.
    pub worst_center: usize,
    pub worst_radius: f64,
    pub balls_used: usize,
}

/// Largest eigenvalue of the pencil `(M_B, L)` on functions modulo
/// constants: `max_u sum_B (u - mean_B u)^2 mu / E(u, u)`.
///
/// With `A` the map `u -> sqrt(mu_x) (u_x - mean_B u)` for `x` in `B`, this
/// is the top eigenvalue of `A Z A^T` for any grounded Green matrix `Z`:
/// `A` annihilates constants, so the grounding drops out.
pub(crate) fn ball_eigenvalue(z: &DMatrix<f64>, mu: &[f64], members: &[usize]) -> f64 {
    let m = members.len();
    let mass: f64 = members.iter().map(|&x| mu[x]).sum();
    let p: Vec<f64> = members.iter().map(|&x| mu[x] / mass).collect();
    // zbar_a = sum_c p_c Z[a, c], zbb = sum_a p_a zbar_a
    let zbar: Vec<f64> = members
        .iter()
        .map(|&a| members.iter().zip(&p).map(|(&c, pc)| pc * z[(a, c)]).sum())
        .collect();
    let zbb: f64 = zbar.iter().zip(&p).map(|(a, b)| a * b).sum();
    let k = DMatrix::from_fn(m, m, |i, j| {
        let (a, c) = (members[i], members[j]);
        (mu[a] * mu[c]).sqrt() * (z[(a, c)] - zbar[i] - zbar[j] + zbb)
    });
    SymmetricEigen::new(k).eigenvalues.max().max(0.0)
}

/// `C1_p = max over balls of lambda_max(B) / r^gamma`. Single-vertex balls
/// are skipped.
pub fn estimate_poincare_constant(
    space: &MetricMeasureSpace,
    gamma: f64,
    centers: &[usize],
    radii: &[f64],
) -> Result<PoincareEstimate> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    for &c in centers {
        space.check_vertex(c)?;
    }
    let z = GroundedSolver::new(space, 0, SolverOptions::default())?.green_matrix()?;
    let mu = space.measure();
    let items: Vec<(usize, f64)> = centers
        .iter()
        .flat_map(|&c| radii.iter().filter(|&&r| r > 0.0).map(move |&r| (c, r)))
        .collect();
    let values: Vec<Option<f64>> = items
        .par_iter()
        .map(|&(c, r)| {
            let b = space::ball(space, c, r)?;
            if b.len() < 2 {
                return Ok(None);
            }
            Ok(Some(ball_eigenvalue(&z, mu, &b.members) / r.powf(gamma)))
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, usize)> = None;
    let mut used = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            used += 1;
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, i));
            }
        }
    }
    let (c1_p, i) = best.ok_or_else(|| Error::InsufficientData("every ball is a single vertex".into()))?;
    Ok(PoincareEstimate {
        gamma,
        c1_p,
        worst_center: items[i].0,
        worst_radius: items[i].1,
        balls_used: used,
    })
}
