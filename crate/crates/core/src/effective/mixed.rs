//! Coefficients of the mixed macroscale system.
//!
//! Every column is a pair `(v, u)` on `R+`. Trial columns are ordered as
//! [`MixedColumn::all`]: constant pressure `i`, linear pressure `(i, m)`,
//! velocity `(i, k)`. The test columns are the same fields, read as the
//! coefficients of `Q_j`, `d_l Q_j` and of the velocity test `W_jk`. The
//! pairing matrix holds `a_mix(trial, test) / |R^I|` for all pairs.

use serde::{Deserialize, Serialize};

use super::check_finite;
use crate::cell_problems::{MixedCells, MixedColumn};
use crate::error::{Error, Result};
use crate::fine_solvers::{FluxBoundary, MixedOperator};
use crate::grid::{CellRect, RegionSet, ScalarField};
use crate::media::MediumSpec;

/// How the divergence term of `a_mix` is localized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceForm {
    /// `-int v . grad w`: the divergence moved onto the test pressure, with
    /// the boundary term of the localized region dropped.
    Weak,
    /// `int div(v) w` cell by cell.
    Strong,
}

impl std::str::FromStr for DivergenceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Self::Weak),
            "strong" => Ok(Self::Strong),
            _ => Err(Error::Config(format!("unknown divergence form `{s}` (weak | strong)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedEffective {
    pub block: (usize, usize),
    pub n_continua: usize,
    pub measure: f64,
    pub divergence: DivergenceForm,
    /// `pairing[trial][test]`, both indexed as [`MixedColumn::index`].
    pub pairing: Vec<Vec<f64>>,
    /// `int f u` of the constant-pressure test columns.
    pub f_u: Vec<f64>,
    /// `int f u` of the linear-pressure test columns, `[j][m]`.
    pub f_u_m: Vec<[f64; 2]>,
    /// `int f u` of the velocity test columns, `[j][k]`.
    pub f_v: Vec<[f64; 2]>,
}

/// Named view of [`MixedEffective`]. Trial index first except where the
/// conventional name puts the test index first (`beta_u`, `beta_v`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedTensors {
    pub block: (usize, usize),
    pub measure: f64,
    /// `[i][j]`: constant pressure `i` against `Q_j`.
    pub alpha_u: Vec<Vec<f64>>,
    /// `[i][j][m]`: linear pressure `(i, m)` against `Q_j`.
    pub alpha_u_m: Vec<Vec<[f64; 2]>>,
    /// `[i][j][m]`: constant pressure `i` against `d_m Q_j`.
    pub alpha_bar_u_m: Vec<Vec<[f64; 2]>>,
    /// `[i][j][n][m]`: linear pressure `(i, m)` against `d_n Q_j`.
    pub alpha_u_nm: Vec<Vec<[[f64; 2]; 2]>>,
    /// `[j][i][k]`: velocity `(i, k)` against `Q_j`.
    pub beta_u: Vec<Vec<[f64; 2]>>,
    /// `[j][i][k][m]`: velocity `(i, k)` against `d_m Q_j`.
    pub beta_u_m: Vec<Vec<[[f64; 2]; 2]>>,
    /// `[i][j][k]`: constant pressure `i` against `W_jk`.
    pub alpha_v: Vec<Vec<[f64; 2]>>,
    /// `[i][j][k][m]`: linear pressure `(i, m)` against `W_jk`.
    pub alpha_v_m: Vec<Vec<[[f64; 2]; 2]>>,
    /// `[j][k][i][s]`: velocity `(i, s)` against `W_jk`.
    pub beta_v: Vec<[Vec<[f64; 2]>; 2]>,
    pub f_u: Vec<f64>,
    pub f_u_m: Vec<[f64; 2]>,
    pub f_v: Vec<[f64; 2]>,
}

impl MixedEffective {
    fn p(&self, trial: MixedColumn, test: MixedColumn) -> f64 {
        let nc = self.n_continua;
        self.pairing[trial.index(nc)][test.index(nc)]
    }

    pub fn tensors(&self) -> MixedTensors {
        use MixedColumn::{ConstPressure as P0, LinearPressure as P1, Velocity as Vel};
        let nc = self.n_continua;
        let r = 0..nc;
        MixedTensors {
            block: self.block,
            measure: self.measure,
            alpha_u: r.clone().map(|i| r.clone().map(|j| self.p(P0 { i }, P0 { i: j })).collect()).collect(),
            alpha_u_m: r
                .clone()
                .map(|i| r.clone().map(|j| [0, 1].map(|m| self.p(P1 { i, m }, P0 { i: j }))).collect())
                .collect(),
            alpha_bar_u_m: r
                .clone()
                .map(|i| r.clone().map(|j| [0, 1].map(|m| self.p(P0 { i }, P1 { i: j, m }))).collect())
                .collect(),
            alpha_u_nm: r
                .clone()
                .map(|i| {
                    r.clone()
                        .map(|j| [0, 1].map(|n| [0, 1].map(|m| self.p(P1 { i, m }, P1 { i: j, m: n }))))
                        .collect()
                })
                .collect(),
            beta_u: r
                .clone()
                .map(|j| r.clone().map(|i| [0, 1].map(|k| self.p(Vel { i, k }, P0 { i: j }))).collect())
                .collect(),
            beta_u_m: r
                .clone()
                .map(|j| {
                    r.clone()
                        .map(|i| [0, 1].map(|k| [0, 1].map(|m| self.p(Vel { i, k }, P1 { i: j, m }))))
                        .collect()
                })
                .collect(),
            alpha_v: r
                .clone()
                .map(|i| r.clone().map(|j| [0, 1].map(|k| self.p(P0 { i }, Vel { i: j, k }))).collect())
                .collect(),
            alpha_v_m: r
                .clone()
                .map(|i| {
                    r.clone()
                        .map(|j| [0, 1].map(|k| [0, 1].map(|m| self.p(P1 { i, m }, Vel { i: j, k }))))
                        .collect()
                })
                .collect(),
            beta_v: r
                .clone()
                .map(|j| {
                    [0, 1].map(|k| r.clone().map(|i| [0, 1].map(|s| self.p(Vel { i, k: s }, Vel { i: j, k }))).collect())
                })
                .collect(),
            f_u: self.f_u.clone(),
            f_u_m: self.f_u_m.clone(),
            f_v: self.f_v.clone(),
        }
    }

    /// Frobenius norm over the trial/test block `trial x test`.
    fn block_norm(&self, trial: impl Fn(MixedColumn) -> bool, test: impl Fn(MixedColumn) -> bool) -> f64 {
        let cols = MixedColumn::all(self.n_continua);
        let mut s = 0.0;
        for &a in cols.iter().filter(|c| trial(**c)) {
            for &b in cols.iter().filter(|c| test(**c)) {
                s += self.p(a, b).powi(2);
            }
        }
        s.sqrt()
    }

    /// `||alpha^v||`: constant pressures against velocity tests.
    pub fn alpha_v_norm(&self) -> f64 {
        self.block_norm(is_const, is_velocity)
    }

    /// `||beta^v||`: velocities against velocity tests.
    pub fn beta_v_norm(&self) -> f64 {
        self.block_norm(is_velocity, is_velocity)
    }

    /// `||alpha^u_nm||`: linear pressures against gradient tests.
    pub fn diffusion_norm(&self) -> f64 {
        self.block_norm(is_linear, is_linear)
    }

    /// Norm of the net convection `alpha^u_{ijm} - alphabar^u_{ijm}` left
    /// after integrating the second convection term by parts.
    pub fn convection_defect(&self) -> f64 {
        use MixedColumn::{ConstPressure as P0, LinearPressure as P1};
        let nc = self.n_continua;
        let mut s = 0.0;
        for i in 0..nc {
            for j in 0..nc {
                for m in 0..2 {
                    let d = self.p(P1 { i, m }, P0 { i: j }) - self.p(P0 { i }, P1 { i: j, m });
                    s += d * d;
                }
            }
        }
        s.sqrt()
    }
}

fn is_const(c: MixedColumn) -> bool {
    matches!(c, MixedColumn::ConstPressure { .. })
}
fn is_linear(c: MixedColumn) -> bool {
    matches!(c, MixedColumn::LinearPressure { .. })
}
fn is_velocity(c: MixedColumn) -> bool {
    matches!(c, MixedColumn::Velocity { .. })
}

/// Evaluate `a_mix` on all column pairs over `region` (a sub-rectangle of
/// `R+`). Faces strictly inside `region` carry weight 1, faces on its
/// boundary 1/2. Source moments are averages over `source_region`.
pub fn assemble_mixed(
    medium: &MediumSpec,
    regions: &RegionSet,
    cells: &MixedCells,
    f: &ScalarField,
    region: &CellRect,
    source_region: &CellRect,
    divergence: DivergenceForm,
) -> Result<MixedEffective> {
    let nc = medium.n_continua();
    let ncol = 5 * nc;
    if cells.n_continua != nc || cells.columns.len() != ncol {
        return Err(Error::MissingColumns(format!(
            "expected {ncol} mixed columns for {nc} continua, found {}",
            cells.columns.len()
        )));
    }
    let rect = regions.oversampled_cells();
    if !rect.contains_rect(region) || !rect.contains_rect(source_region) {
        return Err(Error::Geometry("integration region leaves the oversampled region".into()));
    }
    let op = MixedOperator::assemble(&medium.kappa, rect, FluxBoundary::NoFlux)?;
    let area = regions.h * regions.h;
    let measure = region.n_cells() as f64 * area;

    let inside = |local: usize| {
        let (i, j) = (rect.i0 + local % rect.width(), rect.j0 + local / rect.width());
        region.contains(i, j)
    };
    let cell_w: Vec<f64> = (0..op.n_cells()).map(|c| if inside(c) { 1.0 } else { 0.0 }).collect();
    let face_w: Vec<f64> = op
        .layout
        .active_faces
        .iter()
        .map(|&f| {
            let (a, b) = op.layout.face_cells(f);
            0.5 * (a.map_or(0.0, |c| cell_w[c]) + b.map_or(0.0, |c| cell_w[c]))
        })
        .collect();

    let grads: Vec<Vec<f64>> = cells.columns.iter().map(|c| op.apply_grad(&c.u)).collect();
    let divs: Vec<Vec<f64>> = match divergence {
        DivergenceForm::Strong => cells.columns.iter().map(|c| op.apply_div(&c.v)).collect(),
        DivergenceForm::Weak => Vec::new(),
    };

    let mut pairing = vec![vec![0.0; ncol]; ncol];
    for s in 0..ncol {
        let trial = &cells.columns[s];
        for t in 0..ncol {
            let test = &cells.columns[t];
            let mut acc = 0.0;
            for (r, &w) in face_w.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let q = test.v[r];
                let mut term = q * (op.mass[r] * trial.v[r] + grads[s][r]);
                if divergence == DivergenceForm::Weak {
                    term -= trial.v[r] * grads[t][r];
                }
                acc += w * term;
            }
            if divergence == DivergenceForm::Strong {
                for (c, &w) in cell_w.iter().enumerate() {
                    if w != 0.0 {
                        acc += divs[s][c] * test.u[c];
                    }
                }
            }
            pairing[s][t] = acc / measure;
        }
    }

    let src_measure = source_region.n_cells() as f64 * area;
    let src = |col: MixedColumn| -> f64 {
        let u = &cells.columns[col.index(nc)].u;
        source_region.cells().map(|(i, j)| f.at(i, j) * u[rect.local_index(i, j)]).sum::<f64>() * area / src_measure
    };
    let f_u = (0..nc).map(|j| src(MixedColumn::ConstPressure { i: j })).collect();
    let f_u_m = (0..nc)
        .map(|j| [0, 1].map(|m| src(MixedColumn::LinearPressure { i: j, m })))
        .collect();
    let f_v = (0..nc).map(|j| [0, 1].map(|k| src(MixedColumn::Velocity { i: j, k }))).collect();

    let out = MixedEffective {
        block: regions.block,
        n_continua: nc,
        measure,
        divergence,
        pairing,
        f_u,
        f_u_m,
        f_v,
    };
    let all = out
        .pairing
        .iter()
        .flatten()
        .chain(&out.f_u)
        .chain(out.f_u_m.iter().flatten())
        .chain(out.f_v.iter().flatten())
        .copied();
    check_finite(all, &format!("mixed coefficients of block {:?}", regions.block))?;
    Ok(out)
}
