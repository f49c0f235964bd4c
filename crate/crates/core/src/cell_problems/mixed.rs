//! Constrained cell problems for the mixed system on `R+` with zero normal
//! flux on its boundary.
//!
//! Unknowns are `[v, u, lambda]`. Pressure-average rows act on `u` and their
//! multipliers force the mass balance; velocity-average rows act on `v` and
//! force the momentum equation:
//!
//! ```text
//! M v + G u - Cv^T lambda_v = 0
//! D v       - Cp^T lambda_p = 0
//! Cp u = g_p,   Cv v = g_v
//! ```

use serde::{Deserialize, Serialize};

use super::constraints::{ConstraintRow, ConstraintSet, RowBuilder};
use super::CONSTRAINT_TOL;
use crate::error::{Error, Result};
use crate::fine_solvers::{FluxBoundary, MixedOperator};
use crate::grid::{tile_moments, RegionSet, TileMoments};
use crate::linalg::{SparseSolver, TripletMatrix};
use crate::media::MediumSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixedColumn {
    /// `(phi^vu_i, phi^uu_i)`: unit pressure averages in continuum `i`.
    ConstPressure { i: usize },
    /// `(phi^vu_im, phi^uu_im)`: pressure moments `x_m - c_m` in continuum `i`.
    LinearPressure { i: usize, m: usize },
    /// `(phi^vv_ik, phi^uv_ik)`: unit velocity averages along `k` in continuum `i`.
    Velocity { i: usize, k: usize },
}

impl MixedColumn {
    pub fn all(n_continua: usize) -> Vec<Self> {
        let mut out: Vec<Self> = (0..n_continua).map(|i| Self::ConstPressure { i }).collect();
        for i in 0..n_continua {
            for m in 0..2 {
                out.push(Self::LinearPressure { i, m });
            }
        }
        for i in 0..n_continua {
            for k in 0..2 {
                out.push(Self::Velocity { i, k });
            }
        }
        out
    }

    pub fn index(&self, nc: usize) -> usize {
        match *self {
            Self::ConstPressure { i } => i,
            Self::LinearPressure { i, m } => nc + 2 * i + m,
            Self::Velocity { i, k } => 3 * nc + 2 * i + k,
        }
    }

    pub fn label(&self) -> String {
        let ax = ["x", "y"];
        match *self {
            Self::ConstPressure { i } => format!("const_pressure_{}", i + 1),
            Self::LinearPressure { i, m } => format!("linear_pressure_{}_{}", i + 1, ax[m]),
            Self::Velocity { i, k } => format!("velocity_{}_{}", i + 1, ax[k]),
        }
    }
}

/// One mixed column: active-face fluxes and cell pressures on `R+`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedField {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Mixed cell solutions of one block, relative to `R+`.
#[derive(Debug, Clone)]
pub struct MixedCells {
    pub n_continua: usize,
    /// Ordered as [`MixedColumn::all`].
    pub columns: Vec<MixedField>,
    /// `(tile, continuum, direction)` of each constraint row.
    pub row_keys: Vec<(usize, usize, Option<usize>)>,
    pub max_residual: f64,
}

impl MixedCells {
    pub fn column(&self, c: MixedColumn) -> &MixedField {
        &self.columns[c.index(self.n_continua)]
    }
}

/// Pressure rows on every tile of `R+`, then velocity rows on the tiles of
/// `R^V`. Unknown indices refer to `[v, u]`.
pub fn mixed_constraints(medium: &MediumSpec, regions: &RegionSet, op: &MixedOperator) -> ConstraintSet {
    let nc = medium.n_continua();
    let nv = op.layout.n_active();
    let ncell = op.n_cells();
    let rect = op.layout.rect;
    let area = regions.h * regions.h;
    let mut builder = RowBuilder::new(nv + ncell);
    let mut rows = Vec::new();
    for (p, tile) in regions.tiles.iter().enumerate() {
        for n in 0..nc {
            for (i, j) in tile.cells.cells() {
                if medium.continua.label(i, j) == n {
                    builder.add(nv + rect.local_index(i, j), area);
                }
            }
            rows.push(ConstraintRow {
                tile: p,
                continuum: n,
                direction: None,
                entries: builder.finish(),
            });
        }
    }
    for (p, tile) in regions.tiles_in(&regions.velocity) {
        for n in 0..nc {
            for s in 0..2 {
                for (i, j) in tile.cells.cells() {
                    if medium.continua.label(i, j) != n {
                        continue;
                    }
                    let faces = op.layout.cell_faces(rect.local_index(i, j));
                    for &f in &faces[2 * s..2 * s + 2] {
                        if let Some(r) = op.layout.active_index(f) {
                            builder.add(r, 0.5 * area);
                        }
                    }
                }
                rows.push(ConstraintRow {
                    tile: p,
                    continuum: n,
                    direction: Some(s),
                    entries: builder.finish(),
                });
            }
        }
    }
    ConstraintSet {
        n_unknowns: nv + ncell,
        rows,
    }
}

pub fn mixed_targets(c: MixedColumn, constraints: &ConstraintSet, moments: &TileMoments) -> Vec<f64> {
    constraints
        .rows
        .iter()
        .map(|r| {
            let (p, n) = (r.tile, r.continuum);
            match (c, r.direction) {
                (MixedColumn::ConstPressure { i }, None) if i == n => moments.mass[p][n],
                (MixedColumn::LinearPressure { i, m }, None) if i == n => moments.first[p][n][m],
                (MixedColumn::Velocity { i, k }, Some(s)) if i == n && s == k => moments.mass[p][n],
                _ => 0.0,
            }
        })
        .collect()
}

/// Solve every mixed column of one block.
pub fn solve_mixed_cells(medium: &MediumSpec, regions: &RegionSet) -> Result<MixedCells> {
    let moments = tile_moments(regions, &medium.continua)?;
    let op = MixedOperator::assemble(&medium.kappa, regions.oversampled_cells(), FluxBoundary::NoFlux)?;
    let constraints = mixed_constraints(medium, regions, &op);
    constraints.check_rank()?;

    let nv = op.layout.n_active();
    let nx = nv + op.n_cells();
    let ncon = constraints.len();
    let dim = nx + ncon;
    let mut saddle = TripletMatrix::with_capacity(dim, dim, 3 * nv + 4 * nv + 2 * nx);
    op.push_saddle(&mut saddle, 0, nv);
    for (r, row) in constraints.rows.iter().enumerate() {
        for &(k, w) in &row.entries {
            saddle.push(k, nx + r, -w);
            saddle.push(nx + r, k, w);
        }
    }

    let columns = MixedColumn::all(medium.n_continua());
    let rhs: Vec<Vec<f64>> = columns
        .iter()
        .map(|&c| {
            let mut b = vec![0.0; dim];
            b[nx..].copy_from_slice(&mixed_targets(c, &constraints, &moments));
            b
        })
        .collect();
    let solver = SparseSolver::lu(&saddle)?;
    let sols = solver.solve_many(&rhs)?;

    let mut out = Vec::with_capacity(columns.len());
    let mut max_residual = 0.0f64;
    for ((c, x), b) in columns.iter().zip(&sols).zip(&rhs) {
        let rel = solver.relative_residual(x, b);
        if !(rel <= 1e-8) {
            return Err(Error::Singular(format!(
                "mixed cell system of block {:?} is near singular (column {}, relative residual {rel:.2e})",
                regions.block,
                c.label()
            )));
        }
        let res = constraints.residual(&x[..nx], &b[nx..]);
        if !(res <= CONSTRAINT_TOL) {
            return Err(Error::ConstraintResidual {
                residual: res,
                tolerance: CONSTRAINT_TOL,
                context: format!("block {:?}, column {}", regions.block, c.label()),
            });
        }
        max_residual = max_residual.max(res);
        out.push(MixedField {
            v: x[..nv].to_vec(),
            u: x[nv..nx].to_vec(),
            lambda: x[nx..].to_vec(),
        });
    }
    Ok(MixedCells {
        n_continua: medium.n_continua(),
        columns: out,
        row_keys: constraints.rows.iter().map(|r| (r.tile, r.continuum, r.direction)).collect(),
        max_residual,
    })
}
