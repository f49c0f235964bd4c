//! Constrained cell problems on oversampled regions and their decay.

mod cache;
mod constraints;
pub mod elliptic;
pub mod mixed;
pub mod zero_order;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use cache::{CellCache, LocalKey};
pub use constraints::{ConstraintRow, ConstraintSet};
pub use elliptic::{solve_elliptic_cells, EllipticCells, EllipticColumn};
pub use mixed::{solve_mixed_cells, MixedCells, MixedColumn, MixedField};
pub use zero_order::{solve_zero_order_cells, ZeroOrderCells};

use crate::error::Result;
use crate::fine_solvers::{FluxBoundary, MixedOperator, NodeLayout};
use crate::grid::{CellRect, RegionSet};
use crate::media::MediumSpec;

/// Absolute tolerance on `|C phi - g|` for every stored column.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Per-ring root-mean-square profiles of one column. Index `r` is the ring
/// of tiles at Chebyshev distance `r` from the target block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingProfile {
    /// RMS of the scalar part (potential or pressure).
    pub scalar: Vec<f64>,
    /// RMS of the scalar part minus its mean on each tile ∩ continuum.
    pub deviation: Vec<f64>,
    /// RMS of the cell-centre velocity magnitude (mixed) or gradient (elliptic).
    pub flux: Vec<f64>,
}

/// Which ring profile the decay ratio is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayQuantity {
    Scalar,
    Deviation,
    Flux,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub block: (usize, usize),
    pub column: String,
    pub l: usize,
    pub quantity: DecayQuantity,
    pub profile: RingProfile,
    /// Norm on the outermost ring of `R+`.
    pub outer: f64,
    /// Norm on the target block.
    pub central: f64,
    /// `outer / central` (zero when both vanish).
    pub ratio: f64,
}

impl DecayReport {
    fn new(regions: &RegionSet, column: String, quantity: DecayQuantity, profile: RingProfile) -> Self {
        let ring = match quantity {
            DecayQuantity::Scalar => &profile.scalar,
            DecayQuantity::Deviation => &profile.deviation,
            DecayQuantity::Flux => &profile.flux,
        };
        let central = ring[0];
        let outer = *ring.last().unwrap();
        let ratio = if central > 0.0 {
            outer / central
        } else if outer == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            block: regions.block,
            column,
            l: regions.layers.l,
            quantity,
            profile,
            outer,
            central,
            ratio,
        }
    }
}

struct RingAccumulator {
    sums: [Vec<f64>; 3],
    area: Vec<f64>,
}

impl RingAccumulator {
    fn new(n: usize) -> Self {
        Self {
            sums: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            area: vec![0.0; n],
        }
    }

    fn finish(self) -> RingProfile {
        let rms = |s: &Vec<f64>| -> Vec<f64> {
            s.iter()
                .zip(&self.area)
                .map(|(v, a)| if *a > 0.0 { (v / a).sqrt() } else { 0.0 })
                .collect()
        };
        RingProfile {
            scalar: rms(&self.sums[0]),
            deviation: rms(&self.sums[1]),
            flux: rms(&self.sums[2]),
        }
    }
}

/// Shared ring walk: `scalar(local)` and `flux(local)` are evaluated per cell
/// of `rect` (local row-major index).
fn ring_profile(
    medium: &MediumSpec,
    regions: &RegionSet,
    rect: &CellRect,
    scalar: impl Fn(usize, usize, usize) -> f64,
    flux: impl Fn(usize, usize, usize) -> [f64; 2],
) -> RingProfile {
    let nr = regions.outer_ring() + 1;
    let nc = medium.n_continua();
    let area = regions.h * regions.h;
    let mut acc = RingAccumulator::new(nr);
    for tile in &regions.tiles {
        let r = tile.ring;
        let mut mean = vec![0.0; nc];
        let mut count = vec![0usize; nc];
        for (i, j) in tile.cells.cells() {
            let n = medium.continua.label(i, j);
            mean[n] += scalar(i, j, rect.local_index(i, j));
            count[n] += 1;
        }
        for n in 0..nc {
            if count[n] > 0 {
                mean[n] /= count[n] as f64;
            }
        }
        for (i, j) in tile.cells.cells() {
            let k = rect.local_index(i, j);
            let s = scalar(i, j, k);
            let d = s - mean[medium.continua.label(i, j)];
            let g = flux(i, j, k);
            acc.sums[0][r] += s * s * area;
            acc.sums[1][r] += d * d * area;
            acc.sums[2][r] += (g[0] * g[0] + g[1] * g[1]) * area;
            acc.area[r] += area;
        }
    }
    acc.finish()
}

/// Ring profile of an elliptic column (vertex values on `R+`).
pub fn elliptic_ring_profile(medium: &MediumSpec, regions: &RegionSet, nodal: &[f64]) -> RingProfile {
    let layout: NodeLayout = elliptic::cell_layout(regions);
    let rect = regions.oversampled_cells();
    let h = regions.h;
    ring_profile(
        medium,
        regions,
        &rect,
        |i, j, _| layout.cell_nodes(i, j).iter().map(|&n| nodal[n]).sum::<f64>() * 0.25,
        |i, j, _| crate::fine_solvers::q1_cell_gradient(&layout, nodal, i, j, h),
    )
}

/// Ring profile of a mixed column.
pub fn mixed_ring_profile(medium: &MediumSpec, regions: &RegionSet, field: &MixedField) -> Result<RingProfile> {
    let rect = regions.oversampled_cells();
    let op = MixedOperator::assemble(&medium.kappa, rect, FluxBoundary::NoFlux)?;
    let faces = op.expand_faces(&field.v);
    let vel = op.cell_velocity(&faces);
    Ok(ring_profile(medium, regions, &rect, |_, _, k| field.u[k], |_, _, k| vel[k]))
}

/// Decay quantity used for each kind of column: the deviation from the
/// prescribed tile averages for scalar-constrained columns, the velocity for
/// velocity-constrained ones.
pub fn default_quantity_mixed(c: MixedColumn) -> DecayQuantity {
    match c {
        MixedColumn::Velocity { .. } => DecayQuantity::Flux,
        _ => DecayQuantity::Deviation,
    }
}

pub fn elliptic_decay(
    medium: &MediumSpec,
    regions: &RegionSet,
    cells: &EllipticCells,
    quantity: DecayQuantity,
) -> Vec<DecayReport> {
    EllipticColumn::all(cells.n_continua)
        .into_iter()
        .map(|c| {
            let prof = elliptic_ring_profile(medium, regions, cells.column(c));
            DecayReport::new(regions, c.label(), quantity, prof)
        })
        .collect()
}

pub fn mixed_decay(
    medium: &MediumSpec,
    regions: &RegionSet,
    cells: &MixedCells,
    quantity: impl Fn(MixedColumn) -> DecayQuantity,
) -> Result<Vec<DecayReport>> {
    MixedColumn::all(cells.n_continua)
        .into_iter()
        .map(|c| {
            let prof = mixed_ring_profile(medium, regions, cells.column(c))?;
            Ok(DecayReport::new(regions, c.label(), quantity(c), prof))
        })
        .collect()
}

/// One JSON object per line.
pub fn write_decay_log(reports: &[DecayReport], mut w: impl Write) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
