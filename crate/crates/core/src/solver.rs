//! Sparse direct solves and the bordered velocity–pressure system.
//!
//! The saddle-point system is stored as one square matrix over
//! `[u, p, λ]`, where `λ` is the multiplier of the zero-mean pressure
//! constraint:
//!
//! ```text
//! [ A   -Dᵀ  0 ] [u]   [f]
//! [-D    0   m ] [p] = [g]
//! [ 0    mᵀ  0 ] [λ]   [0]
//! ```
//!
//! Dirichlet velocity dofs become unit rows with their columns removed, so
//! the returned `p` carries the physical sign of the pressure.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, MatMut};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Divergence residual accepted by [`solve_saddle`].
pub const DIVERGENCE_TOL: f64 = 1e-9;
/// Pressure-mean residual accepted by [`solve_saddle`].
pub const MEAN_TOL: f64 = 1e-10;
/// Relative residual accepted from a factorized solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `A x` with a dimension check.
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: x.len(),
        });
    }
    Ok(a.mul_vec(x))
}

/// Fill-reducing ordering and symbolic factorization of a fixed CSR
/// pattern, reusable for any values on that pattern.
#[derive(Debug, Clone)]
pub struct SymbolicAnalysis {
    n: usize,
    pattern: SymbolicSparseColMat<usize>,
    /// CSR value position -> CSC value position
    csr_to_csc: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl SymbolicAnalysis {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let t = a.transpose();
        // rows of the transpose are the columns of `a`, sorted by row index
        let col_ptr = t.row_ptr().to_vec();
        let row_idx = t.col_idx().to_vec();
        let mut next = col_ptr.clone();
        let mut csr_to_csc = vec![0; a.nnz()];
        for i in 0..n {
            for k in a.row_ptr()[i]..a.row_ptr()[i + 1] {
                let j = a.col_idx()[k];
                csr_to_csc[k] = next[j];
                next[j] += 1;
            }
        }
        let pattern = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let symbolic = SymbolicLu::try_new(pattern.as_ref()).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            n,
            pattern,
            csr_to_csc,
            symbolic,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.csr_to_csc.len()
    }

    /// Numeric factorization of values laid out on the analysed CSR pattern.
    pub fn factorize_values(&self, csr_values: &[f64]) -> Result<LuFactorization> {
        if csr_values.len() != self.nnz() {
            return Err(Error::DimensionMismatch {
                expected: self.nnz(),
                found: csr_values.len(),
            });
        }
        let mut csc = vec![0.0; csr_values.len()];
        for (k, &v) in csr_values.iter().enumerate() {
            csc[self.csr_to_csc[k]] = v;
        }
        let mat = SparseColMatRef::new(self.pattern.as_ref(), &csc);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat).map_err(|e| match e {
            LuError::SymbolicSingular { index } => Error::SingularMatrix { pivot: index },
            LuError::Generic(g) => Error::Factorization(format!("{g:?}")),
        })?;
        Ok(LuFactorization {
            n: self.n,
            lu,
            col_ptr: self.pattern.col_ptr().to_vec(),
            row_idx: self.pattern.row_idx().to_vec(),
            values: csc,
        })
    }

    /// Numeric factorization of a matrix with exactly the analysed pattern.
    pub fn factorize(&self, a: &SparseMatrix) -> Result<LuFactorization> {
        self.factorize_values(a.values())
    }
}

/// Sparse LU factors with partial pivoting; immutable and reusable for any
/// number of right-hand sides.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    lu: Lu<usize, f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut r = b.to_vec();
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                r[self.row_idx[k]] -= self.values[k] * x[j];
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `A⁻¹ b` without any checks.
    pub fn apply_inverse(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.lu
            .solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }

    /// Solves `A x = b`; fails when the solution is not finite or the
    /// residual exceeds `1e-10 ‖b‖∞`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let x = self.apply_inverse(b);
        if let Some(pivot) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix { pivot });
        }
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = self.residual_inf(&x, b);
        if res > RESIDUAL_TOL * bnorm {
            return Err(Error::Factorization(format!(
                "residual {res:e} exceeds {RESIDUAL_TOL:e} x |b| = {:e}",
                RESIDUAL_TOL * bnorm
            )));
        }
        Ok(x)
    }
}

/// Outcome of [`gmres`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovInfo {
    pub iterations: usize,
    /// Final residual 2-norm estimated by the Arnoldi recurrence.
    pub residual: f64,
    pub converged: bool,
}

/// Right-preconditioned GMRES without restarts, from `x₀ = 0`: minimises
/// `‖b − A M⁻¹ y‖₂` over a Krylov space of dimension at most `max_iter`
/// and stops once that norm is at most `tol`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovInfo) {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let beta = dot(b, b).sqrt();
    if beta <= tol || !beta.is_finite() {
        let info = KrylovInfo {
            iterations: 0,
            residual: beta,
            converged: beta <= tol,
        };
        return (vec![0.0; n], info);
    }
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / beta).collect()];
    let mut preconditioned: Vec<Vec<f64>> = Vec::new();
    // Hessenberg columns after Givens rotations
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut residual = beta;
    while preconditioned.len() < max_iter {
        let z = precondition(&basis[basis.len() - 1]);
        let mut w = apply(&z);
        preconditioned.push(z);
        let mut h = Vec::with_capacity(basis.len() + 1);
        // modified Gram–Schmidt, twice for stability
        for v in &basis {
            let c = dot(&w, v);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
            h.push(c);
        }
        for (k, v) in basis.iter().enumerate() {
            let c = dot(&w, v);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
            h[k] += c;
        }
        let norm = dot(&w, &w).sqrt();
        h.push(norm);
        for (k, &(c, s)) in rotations.iter().enumerate() {
            let (a, d) = (h[k], h[k + 1]);
            h[k] = c * a + s * d;
            h[k + 1] = -s * a + c * d;
        }
        let j = h.len() - 2;
        let denom = h[j].hypot(h[j + 1]);
        if !(denom > 0.0) || !denom.is_finite() {
            break;
        }
        let (c, s) = (h[j] / denom, h[j + 1] / denom);
        h[j] = denom;
        h.truncate(j + 1);
        rotations.push((c, s));
        g.push(-s * g[j]);
        g[j] *= c;
        residual = g[j + 1].abs();
        r.push(h);
        if residual <= tol || norm == 0.0 {
            break;
        }
        basis.push(w.iter().map(|v| v / norm).collect());
    }
    let m = r.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for k in i + 1..m {
            s -= r[k][i] * y[k];
        }
        y[i] = s / r[i][i];
    }
    let mut x = vec![0.0; n];
    for (yk, z) in y.iter().zip(&preconditioned) {
        for (xi, zi) in x.iter_mut().zip(z) {
            *xi += yk * zi;
        }
    }
    let info = KrylovInfo {
        iterations: m,
        residual,
        converged: residual <= tol,
    };
    (x, info)
}

/// One-shot factorization of a square sparse matrix.
pub fn factorize(a: &SparseMatrix) -> Result<LuFactorization> {
    SymbolicAnalysis::new(a)?.factorize(a)
}

/// Velocity block, coupling, constraint row and right-hand side of one solve.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    /// `αM + νK + μG + βB + C(w)` before boundary elimination.
    pub velocity: SparseMatrix,
    /// `(ψ_i, ∇·φ_j)`.
    pub divergence: SparseMatrix,
    /// `∫ψ_i`.
    pub pressure_mean: Vec<f64>,
    /// Homogeneous Dirichlet velocity dofs.
    pub boundary: Vec<usize>,
    /// Stacked `[f; g]` of velocity and pressure length.
    pub rhs: Vec<f64>,
}

impl SaddleSystem {
    pub fn num_velocity(&self) -> usize {
        self.velocity.rows()
    }

    pub fn num_pressure(&self) -> usize {
        self.divergence.rows()
    }

    fn validate(&self) -> Result<()> {
        let (nv, np) = (self.num_velocity(), self.num_pressure());
        let check = |expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, found })
            }
        };
        check(nv, self.velocity.cols())?;
        check(nv, self.divergence.cols())?;
        check(np, self.pressure_mean.len())?;
        check(nv + np, self.rhs.len())?;
        if let Some(&b) = self.boundary.iter().find(|&&b| b >= nv) {
            return Err(Error::InvalidInput(format!("boundary dof {b} out of range")));
        }
        Ok(())
    }
}

/// Low-rank velocity term `L R` carried through auxiliary unknowns
/// `z = R u`, so the bordered matrix stays as sparse as the finite element
/// blocks instead of holding the dense product.
#[derive(Debug, Clone)]
pub struct LowRankCoupling {
    /// `L`, velocity rows by auxiliary columns.
    pub left: SparseMatrix,
    /// `R`, auxiliary rows by velocity columns.
    pub right: SparseMatrix,
}

/// Sparsity of the bordered matrix together with lookup of the velocity
/// block positions, so the values can be refreshed in place.
///
/// With a [`LowRankCoupling`] the unknowns are `[u, p, λ, z]`, with rows
/// `A u + L z − Dᵀp = f` and `R u − z = 0`.
#[derive(Debug, Clone)]
pub struct BorderedPattern {
    nv: usize,
    np: usize,
    naux: usize,
    matrix: SparseMatrix,
    is_boundary: Vec<bool>,
}

impl BorderedPattern {
    /// Bordered matrix for the given blocks; `velocity` fixes the pattern of
    /// the velocity block, which later updates must stay within.
    pub fn new(velocity: &SparseMatrix, divergence: &SparseMatrix, mean: &[f64], boundary: &[usize]) -> Self {
        Self::with_coupling(velocity, divergence, mean, boundary, None)
    }

    pub fn with_coupling(
        velocity: &SparseMatrix,
        divergence: &SparseMatrix,
        mean: &[f64],
        boundary: &[usize],
        coupling: Option<&LowRankCoupling>,
    ) -> Self {
        let nv = velocity.rows();
        let np = divergence.rows();
        let naux = coupling.map_or(0, |c| c.right.rows());
        let mut is_boundary = vec![false; nv];
        for &b in boundary {
            is_boundary[b] = true;
        }
        let dt = divergence.transpose();
        let lambda = nv + np;
        let aux = lambda + 1;
        let mut trip = Vec::with_capacity(velocity.nnz() + 2 * divergence.nnz() + 2 * np + nv);
        for i in 0..nv {
            if is_boundary[i] {
                trip.push((i, i, 1.0));
                continue;
            }
            trip.extend(velocity.row(i).filter(|&(j, _)| !is_boundary[j]).map(|(j, v)| (i, j, v)));
            trip.extend(dt.row(i).map(|(q, v)| (i, nv + q, -v)));
            if let Some(c) = coupling {
                trip.extend(c.left.row(i).map(|(r, v)| (i, aux + r, v)));
            }
        }
        for q in 0..np {
            trip.extend(divergence.row(q).filter(|&(j, _)| !is_boundary[j]).map(|(j, v)| (nv + q, j, -v)));
            trip.push((nv + q, lambda, mean[q]));
            trip.push((lambda, nv + q, mean[q]));
        }
        if let Some(c) = coupling {
            for r in 0..naux {
                trip.extend(c.right.row(r).filter(|&(j, _)| !is_boundary[j]).map(|(j, v)| (aux + r, j, v)));
                trip.push((aux + r, aux + r, -1.0));
            }
        }
        let dim = aux + naux;
        Self {
            nv,
            np,
            naux,
            matrix: SparseMatrix::from_triplets(dim, dim, &trip),
            is_boundary,
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.nv + self.np + 1 + self.naux
    }

    pub fn num_velocity(&self) -> usize {
        self.nv
    }

    pub fn num_pressure(&self) -> usize {
        self.np
    }

    pub fn num_auxiliary(&self) -> usize {
        self.naux
    }

    pub fn is_boundary(&self, dof: usize) -> bool {
        self.is_boundary[dof]
    }

    /// Value position of velocity entry `(i, j)`, or `None` for eliminated
    /// rows and columns.
    pub fn velocity_position(&self, i: usize, j: usize) -> Option<usize> {
        if self.is_boundary[i] || self.is_boundary[j] {
            return None;
        }
        self.matrix.position(i, j)
    }

    /// Values with the velocity block replaced by `velocity`, whose entries
    /// must lie in the analysed pattern.
    pub fn values_with_velocity(&self, velocity: &SparseMatrix) -> Result<Vec<f64>> {
        let mut values = self.matrix.values().to_vec();
        for i in 0..self.nv {
            if self.is_boundary[i] {
                continue;
            }
            for k in self.matrix.row_ptr()[i]..self.matrix.row_ptr()[i + 1] {
                if self.matrix.col_idx()[k] < self.nv {
                    values[k] = 0.0;
                }
            }
            for (j, v) in velocity.row(i) {
                if self.is_boundary[j] {
                    continue;
                }
                let k = self.matrix.position(i, j).ok_or_else(|| {
                    Error::InvalidInput(format!("velocity entry ({i}, {j}) outside the analysed pattern"))
                })?;
                values[k] = v;
            }
        }
        Ok(values)
    }

    /// Bordered right-hand side with Dirichlet entries zeroed.
    pub fn rhs(&self, stacked: &[f64]) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.dim());
        b.extend_from_slice(&stacked[..self.nv + self.np]);
        b.resize(self.dim(), 0.0);
        for (i, v) in b.iter_mut().enumerate().take(self.nv) {
            if self.is_boundary[i] {
                *v = 0.0;
            }
        }
        b
    }

    /// `A x` for values laid out on this pattern.
    pub fn apply(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let (rp, ci) = (self.matrix.row_ptr(), self.matrix.col_idx());
        (0..self.dim())
            .map(|i| (rp[i]..rp[i + 1]).map(|k| values[k] * x[ci[k]]).sum::<f64>())
            .collect()
    }

    /// `b − A x` for values laid out on this pattern.
    pub fn residual(&self, values: &[f64], x: &[f64], b: &[f64]) -> Vec<f64> {
        let (rp, ci) = (self.matrix.row_ptr(), self.matrix.col_idx());
        (0..self.dim())
            .map(|i| b[i] - (rp[i]..rp[i + 1]).map(|k| values[k] * x[ci[k]]).sum::<f64>())
            .collect()
    }
}

/// Velocity, pressure and the residuals measured on them.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    /// `‖D u − g‖∞` over the continuity rows (multiplier term included).
    pub divergence_residual: f64,
    /// `|mᵀp|`.
    pub mean_residual: f64,
}

/// Splits a bordered solution and checks the constraint residuals.
pub fn finish_saddle(
    x: &[f64],
    divergence: &SparseMatrix,
    mean: &[f64],
    pressure_rhs: &[f64],
) -> Result<SaddleSolution> {
    let nv = divergence.cols();
    let np = divergence.rows();
    let (u, rest) = x.split_at(nv);
    let (p, lambda) = rest.split_at(np);
    if lambda.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: nv + np + 1,
            found: x.len(),
        });
    }
    let du = divergence.mul_vec(u);
    let divergence_residual = (0..np)
        .map(|q| (-du[q] + mean[q] * lambda[0] - pressure_rhs[q]).abs())
        .fold(0.0, f64::max);
    let mean_residual = mean.iter().zip(p).map(|(m, p)| m * p).sum::<f64>().abs();
    if !(divergence_residual <= DIVERGENCE_TOL && mean_residual <= MEAN_TOL) {
        return Err(Error::SolverQuality {
            divergence: divergence_residual,
            mean: mean_residual,
        });
    }
    Ok(SaddleSolution {
        velocity: u.to_vec(),
        pressure: p.to_vec(),
        divergence_residual,
        mean_residual,
    })
}

/// Solves the bordered system from scratch.
pub fn solve_saddle(system: &SaddleSystem) -> Result<SaddleSolution> {
    system.validate()?;
    let pattern = BorderedPattern::new(&system.velocity, &system.divergence, &system.pressure_mean, &system.boundary);
    let lu = factorize(pattern.matrix())?;
    let x = lu.solve(&pattern.rhs(&system.rhs))?;
    finish_saddle(
        &x,
        &system.divergence,
        &system.pressure_mean,
        &system.rhs[system.num_velocity()..],
    )
}
