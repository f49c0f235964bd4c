//! Constrained energy-minimizing cell problems for `-div(kappa grad u)`.
//!
//! On `R+` with zero Dirichlet data we solve
//! `[K C^T; C 0] [phi; mu] = [0; g]` once per block and reuse the factor for
//! every column. The multipliers are reported as forcing coefficients
//! `Gamma = -mu`, so that `K phi = C^T Gamma`.

use serde::{Deserialize, Serialize};

use super::constraints::{ConstraintRow, ConstraintSet, RowBuilder};
use super::CONSTRAINT_TOL;
use crate::error::{Error, Result};
use crate::fine_solvers::{DirichletSides, EllipticOperator, NodeLayout};
use crate::grid::{tile_moments, RegionSet, TileMoments};
use crate::linalg::{SparseSolver, TripletMatrix};
use crate::media::MediumSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EllipticColumn {
    /// `phi_m`: unit averages in continuum `m`.
    Const { m: usize },
    /// `phi_m^l`: linear moments `x_l - c_l` in continuum `m`.
    Linear { m: usize, l: usize },
}

impl EllipticColumn {
    pub fn all(n_continua: usize) -> Vec<Self> {
        let mut out: Vec<Self> = (0..n_continua).map(|m| Self::Const { m }).collect();
        for m in 0..n_continua {
            for l in 0..2 {
                out.push(Self::Linear { m, l });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        match self {
            Self::Const { m } => format!("const_{}", m + 1),
            Self::Linear { m, l } => format!("linear_{}_{}", m + 1, ["x", "y"][*l]),
        }
    }
}

/// Cell solutions of one block, stored relative to `R+` so they can be
/// reused by any block with the same local problem.
#[derive(Debug, Clone)]
pub struct EllipticCells {
    pub n_continua: usize,
    /// Vertex values on `R+` per column, ordered as [`EllipticColumn::all`].
    pub columns: Vec<Vec<f64>>,
    /// Forcing coefficients per column, one per constraint row.
    pub gamma: Vec<Vec<f64>>,
    /// `(tile, continuum)` of each constraint row.
    pub row_keys: Vec<(usize, usize)>,
    /// Largest constraint residual over all columns.
    pub max_residual: f64,
}

impl EllipticCells {
    pub fn column(&self, c: EllipticColumn) -> &[f64] {
        &self.columns[column_index(c, self.n_continua)]
    }

    /// Multiplier of column `c` on `(tile, continuum)`.
    pub fn gamma_at(&self, c: EllipticColumn, tile: usize, continuum: usize) -> f64 {
        let k = self
            .row_keys
            .iter()
            .position(|&rk| rk == (tile, continuum))
            .expect("constraint row exists");
        self.gamma[column_index(c, self.n_continua)][k]
    }
}

fn column_index(c: EllipticColumn, nc: usize) -> usize {
    match c {
        EllipticColumn::Const { m } => m,
        EllipticColumn::Linear { m, l } => nc + 2 * m + l,
    }
}

/// Vertex layout of `R+` in global coordinates.
pub fn cell_layout(regions: &RegionSet) -> NodeLayout {
    NodeLayout::new(regions.oversampled_cells(), DirichletSides::ALL)
}

/// Constraint rows on the free vertices: one per (tile, continuum).
pub fn elliptic_constraints(medium: &MediumSpec, regions: &RegionSet, layout: &NodeLayout) -> ConstraintSet {
    let nc = medium.n_continua();
    let w = 0.25 * regions.h * regions.h;
    let mut builder = RowBuilder::new(layout.n_free());
    let mut rows = Vec::with_capacity(regions.tiles.len() * nc);
    for (p, tile) in regions.tiles.iter().enumerate() {
        for n in 0..nc {
            for (i, j) in tile.cells.cells() {
                if medium.continua.label(i, j) != n {
                    continue;
                }
                for v in layout.cell_nodes(i, j) {
                    if let Some(k) = layout.free_index(v) {
                        builder.add(k, w);
                    }
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
    ConstraintSet {
        n_unknowns: layout.n_free(),
        rows,
    }
}

/// Target vector of a column against the rows of [`elliptic_constraints`].
pub fn elliptic_targets(c: EllipticColumn, constraints: &ConstraintSet, moments: &TileMoments) -> Vec<f64> {
    constraints
        .rows
        .iter()
        .map(|r| match c {
            EllipticColumn::Const { m } if m == r.continuum => moments.mass[r.tile][r.continuum],
            EllipticColumn::Linear { m, l } if m == r.continuum => moments.first[r.tile][r.continuum][l],
            _ => 0.0,
        })
        .collect()
}

/// Solve every elliptic column of one block.
pub fn solve_elliptic_cells(medium: &MediumSpec, regions: &RegionSet) -> Result<EllipticCells> {
    let moments = tile_moments(regions, &medium.continua)?;
    let rect = regions.oversampled_cells();
    let op = EllipticOperator::assemble(&medium.kappa, rect, DirichletSides::ALL)?;
    let layout = &op.layout;

    let constraints = elliptic_constraints(medium, regions, layout);
    constraints.check_rank()?;

    let nf = layout.n_free();
    let ncon = constraints.len();
    let mut saddle = TripletMatrix::with_capacity(nf + ncon, nf + ncon, op.stiffness.nnz_entries() + 8 * nf);
    for (r, row) in constraints.rows.iter().enumerate() {
        for &(k, w) in &row.entries {
            saddle.push(nf + r, k, w);
            saddle.push(k, nf + r, w);
        }
    }
    saddle.extend_from(&op.stiffness, 0, 0);

    let columns = EllipticColumn::all(medium.n_continua());
    let rhs: Vec<Vec<f64>> = columns
        .iter()
        .map(|&c| {
            let mut b = vec![0.0; nf + ncon];
            b[nf..].copy_from_slice(&elliptic_targets(c, &constraints, &moments));
            b
        })
        .collect();
    let solver = SparseSolver::lu(&saddle)?;
    let sols = solver.solve_many(&rhs)?;

    let mut out_cols = Vec::with_capacity(columns.len());
    let mut gammas = Vec::with_capacity(columns.len());
    let mut max_residual = 0.0f64;
    for ((c, x), b) in columns.iter().zip(&sols).zip(&rhs) {
        let res = constraints.residual(&x[..nf], &b[nf..]);
        if !(res <= CONSTRAINT_TOL) {
            return Err(Error::ConstraintResidual {
                residual: res,
                tolerance: CONSTRAINT_TOL,
                context: format!("block {:?}, column {}", regions.block, c.label()),
            });
        }
        max_residual = max_residual.max(res);
        out_cols.push(layout.expand(&x[..nf]));
        gammas.push(x[nf..].iter().map(|v| -v).collect());
    }
    Ok(EllipticCells {
        n_continua: medium.n_continua(),
        columns: out_cols,
        gamma: gammas,
        row_keys: constraints.rows.iter().map(|r| (r.tile, r.continuum)).collect(),
        max_residual,
    })
}
