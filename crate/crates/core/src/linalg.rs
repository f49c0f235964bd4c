//! Thin sparse/dense linear-algebra layer over `faer`.
//!
//! Everything downstream assembles into [`TripletMatrix`] and factors once
//! per operator; multiple right-hand sides share a factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Coordinate-format sparse matrix under assembly. Duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if val != 0.0 {
            self.entries.push(Triplet::new(row, col, val));
        }
    }

    /// Copy all entries of `src` shifted by `(row_off, col_off)`.
    pub fn extend_from(&mut self, src: &TripletMatrix, row_off: usize, col_off: usize) {
        self.entries.extend(
            src.entries
                .iter()
                .map(|t| Triplet::new(t.row + row_off, t.col + col_off, t.val)),
        );
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|t| (t.row, t.col, t.val))
    }

    pub fn nnz_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn to_csc(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &self.entries)
            .map_err(|e| Error::Singular(format!("sparse assembly failed: {e:?}")))
    }

    /// `y = A x` straight from the triplets.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for t in &self.entries {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        for t in &self.entries {
            y[t.col] += t.val * x[t.row];
        }
        y
    }

    /// Dense copy, for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for t in &self.entries {
            d[t.row][t.col] += t.val;
        }
        d
    }

    /// Largest `|A_ij - A_ji|` after summing duplicates.
    pub fn asymmetry(&self) -> Result<f64> {
        let mut sum: HashMap<(usize, usize), f64> = HashMap::with_capacity(self.entries.len());
        for t in &self.entries {
            *sum.entry((t.row, t.col)).or_insert(0.0) += t.val;
        }
        let mut worst = 0.0f64;
        for (&(r, c), &v) in &sum {
            let w = sum.get(&(c, r)).copied().unwrap_or(0.0);
            worst = worst.max((v - w).abs());
        }
        Ok(worst)
    }
}

enum Factor {
    Lu(Lu<usize, f64>),
    Llt(Llt<usize, f64>),
}

/// Sparse direct factorization with one step of iterative refinement on solve.
pub struct SparseSolver {
    matrix: SparseColMat<usize, f64>,
    factor: Factor,
}

impl SparseSolver {
    /// LU with partial pivoting; for general (indefinite, nonsymmetric) systems.
    pub fn lu(a: &TripletMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::Singular(format!("non-square system {}x{}", a.n_rows, a.n_cols)));
        }
        let matrix = a.to_csc()?;
        let lu = matrix
            .as_ref()
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(Self {
            matrix,
            factor: Factor::Lu(lu),
        })
    }

    /// Cholesky; `a` must hold the full symmetric pattern.
    pub fn cholesky(a: &TripletMatrix) -> Result<Self> {
        let matrix = a.to_csc()?;
        let llt = matrix
            .as_ref()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Singular(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self {
            matrix,
            factor: Factor::Llt(llt),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn raw_solve(&self, rhs: &Mat<f64>) -> Mat<f64> {
        match &self.factor {
            Factor::Lu(f) => f.solve(rhs),
            Factor::Llt(f) => f.solve(rhs),
        }
    }

    /// Solve for every column of `rhs` (each of length `dim`).
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        let b = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        let mut x = self.raw_solve(&b);
        let r = &b - &self.matrix * &x;
        let dx = self.raw_solve(&r);
        x += &dx;
        let out: Vec<Vec<f64>> = (0..rhs.len()).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect();
        for (j, col) in out.iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular(format!("solution column {j} is not finite")));
            }
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(std::slice::from_ref(&rhs.to_vec()))?.remove(0))
    }

    /// `||A x - b||_2 / ||b||_2` (or the absolute norm when `b = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let xm = Mat::from_fn(x.len(), 1, |i, _| x[i]);
        let ax = &self.matrix * &xm;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..b.len() {
            num += (ax[(i, 0)] - b[i]).powi(2);
            den += b[i] * b[i];
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    }
}

/// Dense square solve `A x = b` (row-major `a`), LU with partial pivoting.
pub fn dense_solve(n: usize, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let m = Mat::from_fn(n, n, |i, j| a[i * n + j]);
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let lu = m.partial_piv_lu();
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let resid = (0..n)
        .map(|i| {
            let ax: f64 = (0..n).map(|j| a[i * n + j] * out[j]).sum();
            (ax - b[i]).abs()
        })
        .fold(0.0f64, f64::max);
    let bnorm = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if out.iter().any(|v| !v.is_finite()) || resid > 1e-8 * (scale * out.iter().fold(0.0f64, |s, v| s.max(v.abs())) + bnorm) {
        return Err(Error::Singular(format!("dense {n}x{n} system is singular")));
    }
    Ok(out)
}

/// Dense inverse via column solves.
pub fn dense_inverse(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = dense_solve(n, a, &e)?;
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    Ok(inv)
}

/// Numerical rank of a small dense matrix via Gram-Schmidt on its rows.
pub fn row_rank(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let norm0 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = r.clone();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > rel_tol * norm0 {
            for x in &mut v {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    basis.len()
}
