//! Fine-scale reference solvers on the whole domain or a sub-rectangle.

pub mod elliptic;
pub mod mixed;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use elliptic::{q1_cell_gradient, q1_energy, solve_q1, DirichletSides, EllipticOperator, NodeLayout, Q1_STIFFNESS};
pub use mixed::{FaceLayout, FluxBoundary, MixedOperator};

use crate::error::{Error, Result};
use crate::grid::{CellRect, FineGrid, ScalarField};
use crate::media::{MediumSpec, SourceSpec};

/// Fine solution restricted to a cell rectangle. Cell values are row-major
/// over `rect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineSolution {
    pub grid: FineGrid,
    pub rect: CellRect,
    pub u: Vec<f64>,
    /// Vertex values (elliptic only).
    pub nodal: Option<Vec<f64>>,
    /// Normal fluxes on every face of `rect` (mixed only).
    pub flux: Option<Vec<f64>>,
    /// Cell-centre velocity reconstruction (mixed only).
    pub velocity: Option<Vec<[f64; 2]>>,
}

impl FineSolution {
    /// Cell value at global cell `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[self.rect.local_index(i, j)]
    }

    /// Cell values over the whole grid (requires `rect` to be the full grid).
    pub fn to_field(&self) -> Result<ScalarField> {
        if self.rect != self.grid.full_rect() {
            return Err(Error::Geometry("solution does not cover the whole grid".into()));
        }
        ScalarField::new(self.grid, self.u.clone())
    }
}

fn check_region(medium: &MediumSpec, source: &SourceSpec, rect: &CellRect) -> Result<()> {
    let g = medium.grid();
    if source.f.grid != g {
        return Err(Error::Geometry("source and medium grids differ".into()));
    }
    if rect.width() == 0 || rect.height() == 0 || !g.full_rect().contains_rect(rect) {
        return Err(Error::Geometry(format!("region {rect:?} is empty or leaves the grid")));
    }
    Ok(())
}

/// Q1 solve of `-div(kappa grad u) = f` on `rect` with `u = 0` on its boundary.
pub fn solve_elliptic_fine(medium: &MediumSpec, source: &SourceSpec, rect: CellRect) -> Result<FineSolution> {
    check_region(medium, source, &rect)?;
    let (layout, nodal) = elliptic::solve_q1(&medium.kappa, &source.f, rect, DirichletSides::ALL)?;
    let u = layout.cell_values(&nodal, &rect);
    Ok(FineSolution {
        grid: medium.grid(),
        rect,
        u,
        nodal: Some(nodal),
        flux: None,
        velocity: None,
    })
}

/// Two-point flux solve of the mixed system on `rect` with `u = 0` on its boundary.
pub fn solve_mixed_fine(medium: &MediumSpec, source: &SourceSpec, rect: CellRect) -> Result<FineSolution> {
    check_region(medium, source, &rect)?;
    let op = MixedOperator::assemble(&medium.kappa, rect, FluxBoundary::Dirichlet)?;
    let f: Vec<f64> = rect.cells().map(|(i, j)| source.f.at(i, j)).collect();
    let (v, u) = op.solve_dirichlet(&f)?;
    let faces = op.expand_faces(&v);
    let velocity = op.cell_velocity(&faces);
    Ok(FineSolution {
        grid: medium.grid(),
        rect,
        u,
        nodal: None,
        flux: Some(faces),
        velocity: Some(velocity),
    })
}

/// Pointwise solution of `A u = f`.
pub fn solve_zero_order_fine(a: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
    if a.grid != f.grid {
        return Err(Error::Geometry("coefficient and source grids differ".into()));
    }
    if let Some(k) = a.values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Config(format!("zero-order coefficient must be positive, cell {k} has {}", a.values[k])));
    }
    ScalarField::new(a.grid, a.values.iter().zip(&f.values).map(|(a, f)| f / a).collect())
}

/// Write `x y value` per cell of the solution's rectangle.
pub fn write_scalar_dump(sol: &FineSolution, mut w: impl Write) -> Result<()> {
    for ((i, j), v) in sol.rect.cells().zip(&sol.u) {
        let [x, y] = sol.grid.cell_center(i, j);
        writeln!(w, "{x} {y} {v}")?;
    }
    Ok(())
}

/// Write `x y vx vy` per cell (mixed solutions only).
pub fn write_velocity_dump(sol: &FineSolution, mut w: impl Write) -> Result<()> {
    let vel = sol
        .velocity
        .as_ref()
        .ok_or_else(|| Error::Config("solution carries no velocity".into()))?;
    for ((i, j), v) in sol.rect.cells().zip(vel) {
        let [x, y] = sol.grid.cell_center(i, j);
        writeln!(w, "{x} {y} {} {}", v[0], v[1])?;
    }
    Ok(())
}

/// Dump a cell-wise field over an arbitrary rectangle.
pub fn write_field_dump(grid: &FineGrid, rect: &CellRect, values: &[f64], mut w: impl Write) -> Result<()> {
    for ((i, j), v) in rect.cells().zip(values) {
        let [x, y] = grid.cell_center(i, j);
        writeln!(w, "{x} {y} {v}")?;
    }
    Ok(())
}

pub fn save_dumps(sol: &FineSolution, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join(format!("{stem}_u.txt")))?;
    write_scalar_dump(sol, std::io::BufWriter::new(f))?;
    if sol.velocity.is_some() {
        let f = std::fs::File::create(dir.join(format!("{stem}_v.txt")))?;
        write_velocity_dump(sol, std::io::BufWriter::new(f))?;
    }
    Ok(())
}
