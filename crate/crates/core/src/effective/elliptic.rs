//! Coefficients of the coupled second-order macroscale system
//! `B U + B^i d_i U - d_k(Bbar^k U) - d_k(B^{ik} d_i U) = b`.

use serde::{Deserialize, Serialize};

use super::check_finite;
use crate::cell_problems::{elliptic::cell_layout, EllipticCells, EllipticColumn};
use crate::error::{Error, Result};
use crate::fine_solvers::q1_energy;
use crate::grid::{CellRect, RegionSet, ScalarField};
use crate::media::MediumSpec;

/// Per-block tensors. Continuum indices `n` (test) and `m` (trial) are the
/// two innermost indices of every tensor; spatial indices come first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticEffective {
    pub block: (usize, usize),
    pub n_continua: usize,
    /// Measure of the integration region.
    pub measure: f64,
    /// `A[n][m]`.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// `B[n][m] = a(phi_m, phi_n)`.
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    /// `B_i[i][n][m] = a(phi^i_m, phi_n)`.
    #[serde(rename = "B_i")]
    pub b_i: Vec<Vec<Vec<f64>>>,
    /// `B_bar[k][n][m] = a(phi_m, phi^k_n)`.
    #[serde(rename = "B_bar_k")]
    pub b_bar: Vec<Vec<Vec<f64>>>,
    /// `B_ik[i][k][n][m] = a(phi^i_m, phi^k_n)`.
    #[serde(rename = "B_ik")]
    pub b_ik: Vec<Vec<Vec<Vec<f64>>>>,
    /// `b[n] = int f phi_n`.
    #[serde(rename = "b")]
    pub src: Vec<f64>,
    /// `b_k[k][n] = int f phi^k_n`; of order `eps` and unused by default.
    #[serde(rename = "b_k")]
    pub src_grad: Vec<Vec<f64>>,
}

impl EllipticEffective {
    /// Largest `|B[n][m]|`.
    pub fn max_exchange(&self) -> f64 {
        self.b.iter().flatten().fold(0.0, |s, v| s.max(v.abs()))
    }
}

/// Evaluate every pairing on `region` (a sub-rectangle of `R+`).
pub fn assemble_elliptic(
    medium: &MediumSpec,
    regions: &RegionSet,
    cells: &EllipticCells,
    f: &ScalarField,
    region: &CellRect,
) -> Result<EllipticEffective> {
    let nc = medium.n_continua();
    if cells.n_continua != nc || cells.columns.len() != 3 * nc {
        return Err(Error::MissingColumns(format!(
            "expected {} elliptic columns for {nc} continua, found {}",
            3 * nc,
            cells.columns.len()
        )));
    }
    if !regions.oversampled_cells().contains_rect(region) {
        return Err(Error::Geometry("integration region leaves the oversampled region".into()));
    }
    let layout = cell_layout(regions);
    let area = regions.h * regions.h;
    let measure = region.n_cells() as f64 * area;

    let konst = |m: usize| cells.column(EllipticColumn::Const { m });
    let lin = |m: usize, l: usize| cells.column(EllipticColumn::Linear { m, l });
    let energy = |u: &[f64], v: &[f64]| q1_energy(&medium.kappa, &layout, region, u, v) / measure;

    let cell_means: Vec<Vec<f64>> = cells.columns.iter().map(|c| layout.cell_values(c, region)).collect();
    let fvals: Vec<f64> = region.cells().map(|(i, j)| f.at(i, j)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * area / measure;

    let lin_idx = |m: usize, l: usize| nc + 2 * m + l;
    let mut out = EllipticEffective {
        block: regions.block,
        n_continua: nc,
        measure,
        a: vec![vec![0.0; nc]; nc],
        b: vec![vec![0.0; nc]; nc],
        b_i: vec![vec![vec![0.0; nc]; nc]; 2],
        b_bar: vec![vec![vec![0.0; nc]; nc]; 2],
        b_ik: vec![vec![vec![vec![0.0; nc]; nc]; 2]; 2],
        src: (0..nc).map(|n| dot(&fvals, &cell_means[n])).collect(),
        src_grad: (0..2)
            .map(|k| (0..nc).map(|n| dot(&fvals, &cell_means[lin_idx(n, k)])).collect())
            .collect(),
    };
    for n in 0..nc {
        for m in 0..nc {
            out.a[n][m] = dot(&cell_means[m], &cell_means[n]);
            out.b[n][m] = energy(konst(m), konst(n));
            for i in 0..2 {
                out.b_i[i][n][m] = energy(lin(m, i), konst(n));
                out.b_bar[i][n][m] = energy(konst(m), lin(n, i));
                for k in 0..2 {
                    out.b_ik[i][k][n][m] = energy(lin(m, i), lin(n, k));
                }
            }
        }
    }
    let all = out
        .a
        .iter()
        .chain(&out.b)
        .flatten()
        .chain(out.b_i.iter().chain(&out.b_bar).flatten().flatten())
        .chain(out.b_ik.iter().flatten().flatten().flatten())
        .chain(&out.src)
        .chain(out.src_grad.iter().flatten())
        .copied();
    check_finite(all, &format!("elliptic coefficients of block {:?}", regions.block))?;
    Ok(out)
}
