//! Sparse linear algebra: assembly triplets, CSC operators, a direct LU
//! solver and restarted GMRES with pluggable preconditioning.
//!
//! The heavy lifting (fill-reducing ordering, LU factorization) is delegated
//! to `faer`; this module owns the formats and the iterative solver.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LaError {
    #[error("matrix construction failed: {0}")]
    Construction(String),
    #[error("LU factorization failed (singular or structurally deficient matrix)")]
    Factorization,
    #[error("GMRES stagnated: residual {residual:.3e} after {iters} iterations (target {target:.3e})")]
    GmresStagnation {
        residual: f64,
        target: f64,
        iters: usize,
    },
}

/// Accumulator for matrix entries in (row, col, value) form.
///
/// Duplicate coordinates are summed when the operator is built. Exact zeros
/// are dropped at build time so the compressed form stores none.
#[derive(Debug, Clone)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    pub fn append(&mut self, other: &Triplets) {
        debug_assert_eq!(self.nrows, other.nrows);
        debug_assert_eq!(self.ncols, other.ncols);
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn extend_from_vec(&mut self, entries: Vec<(usize, usize, f64)>) {
        self.entries.extend(entries);
    }

    /// Append `other` shifted by a row/column offset and scaled.
    pub fn append_from(&mut self, other: &Triplets, row_offset: usize, col_offset: usize, scale: f64) {
        for &(i, j, v) in &other.entries {
            self.push(i + row_offset, j + col_offset, scale * v);
        }
    }

    /// Multiply every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.2 *= factor;
        }
    }

    /// Entries with rows and columns swapped.
    pub fn transposed(&self) -> Triplets {
        Triplets {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Apply the accumulated entries to a vector: `y += A x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
    }

    pub fn build(&self) -> Result<SparseOperator, LaError> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .entries
            .iter()
            .filter(|&&(_, _, v)| v != 0.0)
            .map(|&(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let mat = SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| LaError::Construction(format!("{e:?}")))?;
        Ok(SparseOperator {
            mat,
            symmetric_hint: false,
        })
    }

    pub fn build_symmetric(&self) -> Result<SparseOperator, LaError> {
        let mut op = self.build()?;
        op.symmetric_hint = true;
        Ok(op)
    }
}

/// Compressed sparse column operator.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    mat: SparseColMat<usize, f64>,
    symmetric_hint: bool,
}

impl SparseOperator {
    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.mat.compute_nnz()
    }

    pub fn is_symmetric_hint(&self) -> bool {
        self.symmetric_hint
    }

    pub(crate) fn faer(&self) -> &SparseColMat<usize, f64> {
        &self.mat
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        y.fill(0.0);
        self.apply_add(x, y);
    }

    /// `y += A x`.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        let col_ptr = self.mat.symbolic().col_ptr();
        let row_idx = self.mat.symbolic().row_idx();
        let val = self.mat.val();
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in col_ptr[j]..col_ptr[j + 1] {
                y[row_idx[k]] += val[k] * xj;
            }
        }
    }

    /// `y = Aᵀ x`.
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows());
        assert_eq!(y.len(), self.ncols());
        let col_ptr = self.mat.symbolic().col_ptr();
        let row_idx = self.mat.symbolic().row_idx();
        let val = self.mat.val();
        for j in 0..self.ncols() {
            let mut acc = 0.0;
            for k in col_ptr[j]..col_ptr[j + 1] {
                acc += val[k] * x[row_idx[k]];
            }
            y[j] = acc;
        }
    }

    /// Iterate stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let col_ptr = self.mat.symbolic().col_ptr();
        let row_idx = self.mat.symbolic().row_idx();
        let val = self.mat.val();
        (0..self.ncols()).flat_map(move |j| {
            (col_ptr[j]..col_ptr[j + 1]).map(move |k| (row_idx[k], j, val[k]))
        })
    }

    /// Stored entry at (i, j), zero if not present.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let col_ptr = self.mat.symbolic().col_ptr();
        let row_idx = self.mat.symbolic().row_idx();
        let val = self.mat.val();
        for k in col_ptr[j]..col_ptr[j + 1] {
            if row_idx[k] == i {
                return val[k];
            }
        }
        0.0
    }

    pub fn transpose(&self) -> Result<SparseOperator, LaError> {
        let mut t = Triplets::new(self.ncols(), self.nrows());
        for (i, j, v) in self.iter() {
            t.push(j, i, v);
        }
        t.build()
    }
}

/// Sparsity-pattern handle for reusing the symbolic analysis across repeated
/// factorizations of structurally identical matrices.
#[derive(Clone)]
pub struct SymbolicFactorization {
    inner: SymbolicLu<usize>,
}

/// Sparse LU factorization with partial pivoting.
pub struct DirectLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl DirectLu {
    pub fn factor(op: &SparseOperator) -> Result<Self, LaError> {
        let sym = SymbolicLu::try_new(op.mat.symbolic()).map_err(|_| LaError::Factorization)?;
        Self::factor_with(&SymbolicFactorization { inner: sym }, op)
    }

    pub fn symbolic(op: &SparseOperator) -> Result<SymbolicFactorization, LaError> {
        let sym = SymbolicLu::try_new(op.mat.symbolic()).map_err(|_| LaError::Factorization)?;
        Ok(SymbolicFactorization { inner: sym })
    }

    pub fn factor_with(
        symbolic: &SymbolicFactorization,
        op: &SparseOperator,
    ) -> Result<Self, LaError> {
        assert_eq!(op.nrows(), op.ncols(), "LU requires a square matrix");
        let lu = Lu::try_new_with_symbolic(symbolic.inner.clone(), op.mat.as_ref())
            .map_err(|_| LaError::Factorization)?;
        Ok(Self {
            lu,
            n: op.nrows(),
        })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        use faer::linalg::solvers::Solve;
        assert_eq!(b.len(), self.n);
        let rhs = faer::MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_in_place(rhs);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Symmetric elimination of Dirichlet-constrained dofs: constrained rows and
/// columns are cleared (column contributions move to the right-hand side) and
/// replaced by identity rows carrying the prescribed values.
pub fn apply_dirichlet(
    trips: &Triplets,
    rhs: &mut [f64],
    constrained: &[(usize, f64)],
) -> Triplets {
    let n = trips.nrows();
    assert_eq!(rhs.len(), n);
    let mut flag = vec![false; n];
    let mut val = vec![0.0; n];
    for &(i, v) in constrained {
        flag[i] = true;
        val[i] = v;
    }
    let mut out = Triplets::with_capacity(n, trips.ncols(), trips.entries().len() + n);
    for &(i, j, v) in trips.entries() {
        if flag[i] {
            continue;
        }
        if flag[j] {
            rhs[i] -= v * val[j];
            continue;
        }
        out.push(i, j, v);
    }
    for (i, &f) in flag.iter().enumerate() {
        if f {
            out.push(i, i, 1.0);
            rhs[i] = val[i];
        }
    }
    out
}

/// Action of a preconditioner `z = M⁻¹ r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// No preconditioning.
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl Preconditioner for DirectLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 30,
            max_iters: 1000,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresInfo {
    pub iterations: usize,
    pub residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES for `A x = b`.
///
/// `x` holds the initial guess on entry and the solution on exit. The
/// residual test is on the true (unpreconditioned) residual.
pub fn gmres(
    a: &SparseOperator,
    m: &impl Preconditioner,
    b: &[f64],
    x: &mut [f64],
    opts: &GmresOptions,
) -> Result<GmresInfo, LaError> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(x.len(), n);
    let b_norm = norm2(b);
    let target = if b_norm > 0.0 {
        opts.rel_tol * b_norm
    } else {
        opts.rel_tol
    };

    let restart = opts.restart.max(1);
    let mut total_iters = 0usize;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    // residual r = b - A x
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut beta = norm2(&r);
    if beta <= target {
        return Ok(GmresInfo {
            iterations: 0,
            residual: beta,
        });
    }

    while total_iters < opts.max_iters {
        // Arnoldi basis of the preconditioned Krylov space.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        let mut hess = vec![vec![0.0f64; restart]; restart + 1];
        let mut cs = vec![0.0f64; restart];
        let mut sn = vec![0.0f64; restart];
        let mut g = vec![0.0f64; restart + 1];
        g[0] = beta;
        basis.push(r.iter().map(|v| v / beta).collect());

        let mut k_used = 0;
        let mut converged = false;
        for k in 0..restart {
            if total_iters >= opts.max_iters {
                break;
            }
            total_iters += 1;
            m.apply(&basis[k], &mut z);
            a.apply(&z, &mut w);
            // modified Gram-Schmidt
            for i in 0..=k {
                let h = dot(&w, &basis[i]);
                hess[i][k] = h;
                for (wi, vi) in w.iter_mut().zip(&basis[i]) {
                    *wi -= h * vi;
                }
            }
            let h_next = norm2(&w);
            hess[k + 1][k] = h_next;
            // apply accumulated Givens rotations
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + h_next * h_next).sqrt();
            if denom == 0.0 {
                k_used = k + 1;
                converged = true;
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = h_next / denom;
            hess[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= target {
                converged = true;
                break;
            }
            if h_next == 0.0 {
                converged = true;
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        if k_used > 0 {
            // back substitution for the Hessenberg least squares problem
            let mut y = vec![0.0f64; k_used];
            for i in (0..k_used).rev() {
                let mut s = g[i];
                for j in i + 1..k_used {
                    s -= hess[i][j] * y[j];
                }
                y[i] = s / hess[i][i];
            }
            // x += M⁻¹ (V y)
            let mut vy = vec![0.0; n];
            for (j, yj) in y.iter().enumerate() {
                for (vi, bij) in vy.iter_mut().zip(&basis[j]) {
                    *vi += yj * bij;
                }
            }
            m.apply(&vy, &mut z);
            for i in 0..n {
                x[i] += z[i];
            }
        }

        a.apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        beta = norm2(&r);
        if converged || beta <= target {
            if beta <= target {
                return Ok(GmresInfo {
                    iterations: total_iters,
                    residual: beta,
                });
            }
        }
    }

    Err(LaError::GmresStagnation {
        residual: beta,
        target,
        iters: total_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spd() -> SparseOperator {
        let mut t = Triplets::new(3, 3);
        t.push(0, 0, 4.0);
        t.push(1, 1, 3.0);
        t.push(2, 2, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 2, -1.0);
        t.push(2, 1, -1.0);
        t.build_symmetric().unwrap()
    }

    #[test]
    fn lu_solves() {
        let a = small_spd();
        let lu = DirectLu::factor(&a).unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        let mut r = vec![0.0; 3];
        a.apply(&x, &mut r);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.5);
        t.push(1, 1, 1.0);
        t.push(0, 1, 0.0);
        let a = t.build().unwrap();
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn gmres_matches_direct() {
        let a = small_spd();
        let b = vec![1.0, -2.0, 0.5];
        let lu = DirectLu::factor(&a).unwrap();
        let x_direct = lu.solve(&b);
        let mut x = vec![0.0; 3];
        let info = gmres(&a, &IdentityPreconditioner, &b, &mut x, &GmresOptions::default()).unwrap();
        assert!(info.residual <= 1e-9);
        for i in 0..3 {
            assert!((x[i] - x_direct[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let mut t = Triplets::new(2, 3);
        t.push(0, 2, 5.0);
        t.push(1, 0, -1.0);
        let a = t.build().unwrap();
        let at = a.transpose().unwrap();
        assert_eq!(at.get(2, 0), 5.0);
        assert_eq!(at.get(0, 1), -1.0);
    }
}
