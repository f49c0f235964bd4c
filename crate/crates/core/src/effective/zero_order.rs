//! Coefficients of the algebraic problem `A u = f`.

use serde::{Deserialize, Serialize};

use super::check_finite;
use crate::cell_problems::ZeroOrderCells;
use crate::error::{Error, Result};
use crate::grid::{RegionSet, ScalarField};
use crate::media::MediumSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroOrderEffective {
    pub block: (usize, usize),
    /// `C_i = int psi_i / int psi_i A^{-1}` over the block.
    pub c: Vec<f64>,
    /// `alpha_ij = int A phi_i phi_j / |R|`.
    pub alpha: Vec<Vec<f64>>,
    /// `b_j = int f phi_j / |R|`.
    pub b: Vec<f64>,
    /// `int psi_i / |R|`.
    pub fraction: Vec<f64>,
}

impl ZeroOrderEffective {
    /// Block averages `U_i = b_i / (C_i |Omega_i ∩ R| / |R|)`.
    pub fn solve(&self) -> Result<Vec<f64>> {
        self.c
            .iter()
            .zip(&self.b)
            .zip(&self.fraction)
            .enumerate()
            .map(|(i, ((&c, &b), &frac))| {
                if c == 0.0 || frac == 0.0 {
                    Err(Error::Singular(format!("C_{} vanishes in block {:?}", i + 1, self.block)))
                } else {
                    Ok(b / (c * frac))
                }
            })
            .collect()
    }
}

/// `a` plays the role of `A` (the medium's coefficient field).
pub fn assemble_zero_order(
    medium: &MediumSpec,
    regions: &RegionSet,
    cells: &ZeroOrderCells,
    f: &ScalarField,
) -> Result<ZeroOrderEffective> {
    let nc = medium.n_continua();
    let rect = regions.oversampled_cells();
    let target = regions.target_cells();
    let area = regions.h * regions.h;
    let measure = target.n_cells() as f64 * area;

    let mut psi = vec![0.0; nc];
    let mut psi_inv = vec![0.0; nc];
    for (i, j) in target.cells() {
        let a = medium.kappa.at(i, j);
        if !(a > 0.0) {
            return Err(Error::Config(format!("zero-order coefficient {a} at cell ({i}, {j}) is not positive")));
        }
        let n = medium.continua.label(i, j);
        psi[n] += area;
        psi_inv[n] += area / a;
    }
    let c: Vec<f64> = psi.iter().zip(&psi_inv).map(|(p, q)| p / q).collect();

    let mut alpha = vec![vec![0.0; nc]; nc];
    let mut b = vec![0.0; nc];
    for (i, j) in target.cells() {
        let k = rect.local_index(i, j);
        let a = medium.kappa.at(i, j);
        for p in 0..nc {
            let vp = cells.columns[p][k];
            b[p] += f.at(i, j) * vp * area;
            for q in 0..nc {
                alpha[p][q] += a * vp * cells.columns[q][k] * area;
            }
        }
    }
    for row in &mut alpha {
        for v in row.iter_mut() {
            *v /= measure;
        }
    }
    for v in &mut b {
        *v /= measure;
    }
    let fraction: Vec<f64> = psi.iter().map(|p| p / measure).collect();
    check_finite(alpha.iter().flatten().copied().chain(b.iter().copied()), "zero-order coefficients")?;
    Ok(ZeroOrderEffective {
        block: regions.block,
        c,
        alpha,
        b,
        fraction,
    })
}
