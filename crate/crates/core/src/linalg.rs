//! Laplacian assembly and grounded linear solves.
//!
//! The energy form of a space is `u^T L u` with `L` the weighted graph
//! Laplacian. `L` is singular (constants span its kernel on a connected
//! graph), so every solve here pins one reference vertex to zero. The
//! grounded system is symmetric positive definite.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::space::MetricMeasureSpace;

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

/// Tuning for the grounded Laplacian solves.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Spaces with at most this many vertices use a direct factorization.
    pub direct_max: usize,
    /// Relative residual target for the iterative path.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            direct_max: 2000,
            rel_tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Compressed sparse row Laplacian.
#[derive(Clone, Debug)]
pub struct SparseLaplacian {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseLaplacian {
    pub fn from_space(space: &MetricMeasureSpace) -> Self {
        let n = space.len();
        let adj = space.adjacency();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, nbrs) in adj.iter().enumerate() {
            for &(j, c) in nbrs {
                cols.push(j);
                vals.push(-c);
                diag[i] += c;
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `y = L x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = self.diag[i] * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}

enum Backend {
    Dense(Cholesky<f64, Dyn>),
    Iterative {
        lap: SparseLaplacian,
        rel_tol: f64,
        max_iter: usize,
    },
}

/// Solver for `L v = b` with `v[ground] = 0`.
pub struct GroundedSolver {
    n: usize,
    ground: usize,
    backend: Backend,
}

impl GroundedSolver {
    pub fn new(space: &MetricMeasureSpace, ground: usize, opts: SolverOptions) -> Result<Self> {
        let n = space.len();
        if ground >= n {
            return Err(Error::Domain(format!("ground vertex {ground} out of range")));
        }
        let lap = SparseLaplacian::from_space(space);
        if n <= opts.direct_max {
            let dense = lap.to_dense();
            let reduced = remove_row_col(&dense, ground);
            let chol = Cholesky::new(reduced).ok_or_else(|| {
                Error::Construction("grounded Laplacian is not positive definite".into())
            })?;
            Ok(Self {
                n,
                ground,
                backend: Backend::Dense(chol),
            })
        } else {
            Ok(Self {
                n,
                ground,
                backend: Backend::Iterative {
                    lap,
                    rel_tol: opts.rel_tol,
                    max_iter: opts.max_iter,
                },
            })
        }
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    /// Solves the grounded system. `rhs[ground]` is ignored; the returned
    /// vector has a zero at `ground`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(rhs.len(), self.n);
        match &self.backend {
            Backend::Dense(chol) => {
                let b = DVector::from_iterator(
                    self.n - 1,
                    (0..self.n).filter(|&i| i != self.ground).map(|i| rhs[i]),
                );
                let x = chol.solve(&b);
                Ok(embed(x.as_slice(), self.ground))
            }
            Backend::Iterative {
                lap,
                rel_tol,
                max_iter,
            } => pcg_grounded(lap, self.ground, rhs, *rel_tol, *max_iter),
        }
    }

    /// Generalized inverse `Z` with zero row and column at `ground`:
    /// `L Z L = L`, and `R(x, y) = Z_xx + Z_yy - 2 Z_xy`.
    pub fn green_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut z = DMatrix::zeros(n, n);
        match &self.backend {
            Backend::Dense(chol) => {
                let inv = chol.inverse();
                let idx: Vec<usize> = (0..n).filter(|&i| i != self.ground).collect();
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        z[(i, j)] = inv[(a, b)];
                    }
                }
            }
            Backend::Iterative { .. } => {
                let mut e = vec![0.0; n];
                for j in 0..n {
                    if j == self.ground {
                        continue;
                    }
                    e[j] = 1.0;
                    let col = self.solve(&e)?;
                    e[j] = 0.0;
                    for i in 0..n {
                        z[(i, j)] = col[i];
                    }
                }
                // symmetrize the iterative result
                for i in 0..n {
                    for j in (i + 1)..n {
                        let m = 0.5 * (z[(i, j)] + z[(j, i)]);
                        z[(i, j)] = m;
                        z[(j, i)] = m;
                    }
                }
            }
        }
        Ok(z)
    }
}

fn remove_row_col(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.clone().remove_row(k).remove_column(k)
}

fn embed(reduced: &[f64], ground: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(reduced.len() + 1);
    out.extend_from_slice(&reduced[..ground]);
    out.push(0.0);
    out.extend_from_slice(&reduced[ground..]);
    out
}

/// Jacobi-preconditioned conjugate gradients on the grounded system.
fn pcg_grounded(
    lap: &SparseLaplacian,
    ground: usize,
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = lap.n();
    let mut b = rhs.to_vec();
    b[ground] = 0.0;
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = lap
        .diag()
        .iter()
        .enumerate()
        .map(|(i, &d)| if i == ground { 0.0 } else { 1.0 / d })
        .collect();
    let mut r = b;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        lap.apply(&p, &mut ap);
        ap[ground] = 0.0;
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Construction(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= rel_tol * bnorm {
            x[ground] = 0.0;
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Construction(format!(
        "conjugate gradients did not reach relative residual {rel_tol:e} in {max_iter} iterations"
    )))
}
