//! Constrained cell problem for the algebraic operator `A u`.
//!
//! With cell unknowns and the operator `diag(A_c h^2)`, the minimizer is
//! `phi = sum_p,n Gamma_pn psi_n^p / A`; its multipliers give the constant
//! forcing structure directly.

use super::constraints::{ConstraintRow, ConstraintSet};
use super::CONSTRAINT_TOL;
use crate::error::{Error, Result};
use crate::grid::{tile_moments, RegionSet};
use crate::linalg::{SparseSolver, TripletMatrix};
use crate::media::MediumSpec;

#[derive(Debug, Clone)]
pub struct ZeroOrderCells {
    pub n_continua: usize,
    /// Cell values on `R+` per constant column.
    pub columns: Vec<Vec<f64>>,
    /// Multipliers per column, rows ordered `(tile, continuum)` tile-major.
    pub gamma: Vec<Vec<f64>>,
    pub max_residual: f64,
}

impl ZeroOrderCells {
    pub fn gamma_at(&self, column: usize, tile: usize, continuum: usize) -> f64 {
        self.gamma[column][tile * self.n_continua + continuum]
    }
}

/// Solve the constant columns with coefficient `a` (the medium's `kappa`
/// plays the role of `A`).
pub fn solve_zero_order_cells(medium: &MediumSpec, regions: &RegionSet) -> Result<ZeroOrderCells> {
    let moments = tile_moments(regions, &medium.continua)?;
    let rect = regions.oversampled_cells();
    let nc = medium.n_continua();
    let n = rect.n_cells();
    let area = regions.h * regions.h;
    let mut rows = Vec::new();
    for (p, tile) in regions.tiles.iter().enumerate() {
        for cont in 0..nc {
            let mut entries: Vec<(usize, f64)> = tile
                .cells
                .cells()
                .filter(|&(i, j)| medium.continua.label(i, j) == cont)
                .map(|(i, j)| (rect.local_index(i, j), area))
                .collect();
            entries.sort_unstable_by_key(|e| e.0);
            rows.push(ConstraintRow {
                tile: p,
                continuum: cont,
                direction: None,
                entries,
            });
        }
    }
    let constraints = ConstraintSet { n_unknowns: n, rows };
    constraints.check_rank()?;
    let ncon = constraints.len();
    let mut saddle = TripletMatrix::with_capacity(n + ncon, n + ncon, 3 * n);
    for (i, j) in rect.cells() {
        let k = rect.local_index(i, j);
        saddle.push(k, k, medium.kappa.at(i, j) * area);
    }
    for (r, row) in constraints.rows.iter().enumerate() {
        for &(k, w) in &row.entries {
            saddle.push(k, n + r, -w);
            saddle.push(n + r, k, w);
        }
    }
    let rhs: Vec<Vec<f64>> = (0..nc)
        .map(|m| {
            let mut b = vec![0.0; n + ncon];
            for (r, row) in constraints.rows.iter().enumerate() {
                if row.continuum == m {
                    b[n + r] = moments.mass[row.tile][m];
                }
            }
            b
        })
        .collect();
    let solver = SparseSolver::lu(&saddle)?;
    let sols = solver.solve_many(&rhs)?;
    let mut max_residual = 0.0f64;
    let mut columns = Vec::with_capacity(nc);
    let mut gamma = Vec::with_capacity(nc);
    for (m, (x, b)) in sols.iter().zip(&rhs).enumerate() {
        let res = constraints.residual(&x[..n], &b[n..]);
        if !(res <= CONSTRAINT_TOL) {
            return Err(Error::ConstraintResidual {
                residual: res,
                tolerance: CONSTRAINT_TOL,
                context: format!("zero-order column {}", m + 1),
            });
        }
        max_residual = max_residual.max(res);
        columns.push(x[..n].to_vec());
        gamma.push(x[n..].to_vec());
    }
    Ok(ZeroOrderCells {
        n_continua: nc,
        columns,
        gamma,
        max_residual,
    })
}
