//! Macroscale solvers on the coarse grid.
//!
//! Both second-order paths reduce to one weak form per coarse cell. With the
//! trial state `z = [U_m, d_i U_m]` and the test state `y = [Q_n, d_k Q_n]`
//! (continuum index first, then `N + 2m + i` for gradients) each cell
//! contributes `int y^T K z = int y^T r` with cell-constant `K` and `r`. This is
//! discretized with bilinear elements, 2x2 Gauss quadrature and `U = 0` on the
//! domain boundary for every continuum.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::effective::{EllipticEffective, MixedEffective, ZeroOrderEffective};
use crate::error::{Error, Result};
use crate::linalg::{dense_solve, SparseSolver, TripletMatrix};

/// Terms the coarse solver may drop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroFlags {
    /// Drop the constant-pressure/velocity-test coupling `alpha^v` (mixed).
    pub neglect_alpha_v: bool,
    /// Drop both convection terms (`B^i` and `Bbar^k`, or the paired
    /// `alpha^u_{ijm}` and `alphabar^u_{ijm}`).
    pub neglect_convection: bool,
    /// Keep the source moments paired with test gradients.
    pub gradient_source: bool,
}

/// Cell-constant coefficients of one coarse block, `k[test][trial]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroCoefficients {
    pub n_continua: usize,
    pub k: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl MacroCoefficients {
    pub fn zeros(n_continua: usize) -> Self {
        let d = 3 * n_continua;
        Self {
            n_continua,
            k: vec![vec![0.0; d]; d],
            rhs: vec![0.0; d],
        }
    }

    /// `-div(d grad U) = f` for a single continuum with isotropic `d`.
    pub fn poisson(d: f64, f: f64) -> Self {
        let mut c = Self::zeros(1);
        c.k[1][1] = d;
        c.k[2][2] = d;
        c.rhs[0] = f;
        c
    }

    pub fn from_elliptic(e: &EllipticEffective, flags: MacroFlags) -> Self {
        let nc = e.n_continua;
        let g = |m: usize, i: usize| nc + 2 * m + i;
        let mut c = Self::zeros(nc);
        for n in 0..nc {
            c.rhs[n] = e.src[n];
            for k in 0..2 {
                if flags.gradient_source {
                    c.rhs[g(n, k)] = e.src_grad[k][n];
                }
            }
            for m in 0..nc {
                c.k[n][m] = e.b[n][m];
                for i in 0..2 {
                    if !flags.neglect_convection {
                        c.k[n][g(m, i)] = e.b_i[i][n][m];
                        c.k[g(n, i)][m] = e.b_bar[i][n][m];
                    }
                    for k in 0..2 {
                        c.k[g(n, k)][g(m, i)] = e.b_ik[i][k][n][m];
                    }
                }
            }
        }
        c
    }
}

/// Local map recovering the macroscopic velocity, `V = e - E z`, with the
/// data needed to re-check the velocity equation.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityElimination {
    /// `E`, `2N x 3N`.
    pub e_mat: Vec<Vec<f64>>,
    /// `e`, `2N`.
    pub e_vec: Vec<f64>,
    /// `beta^v[w][v]` and `alpha^v[w][s]` as used (after neglect flags).
    beta_v: Vec<Vec<f64>>,
    alpha_v: Vec<Vec<f64>>,
    f_v: Vec<f64>,
}

impl VelocityElimination {
    pub fn velocity(&self, z: &[f64]) -> Vec<f64> {
        self.e_mat
            .iter()
            .zip(&self.e_vec)
            .map(|(row, e)| e - row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Max-norm residual of the velocity equation, relative to the scale of
    /// its terms.
    pub fn residual(&self, z: &[f64], v: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for w in 0..self.f_v.len() {
            let bv: f64 = self.beta_v[w].iter().zip(v).map(|(a, b)| a * b).sum();
            let az: f64 = self.alpha_v[w].iter().zip(z).map(|(a, b)| a * b).sum();
            let scale = bv.abs().max(az.abs()).max(self.f_v[w].abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((bv + az - self.f_v[w]).abs() / scale);
        }
        worst
    }
}

/// Eliminate the velocity from the mixed macroscale equations.
pub fn mixed_macro_coefficients(
    e: &MixedEffective,
    flags: MacroFlags,
) -> Result<(MacroCoefficients, VelocityElimination)> {
    let nc = e.n_continua;
    let d = 3 * nc;
    let nv = 2 * nc;
    let mut p = e.pairing.clone();
    if flags.neglect_alpha_v {
        for s in 0..nc {
            for w in 0..nv {
                p[s][d + w] = 0.0;
            }
        }
    }
    if flags.neglect_convection {
        for a in 0..nc {
            for b in nc..d {
                p[b][a] = 0.0;
                p[a][b] = 0.0;
            }
        }
    }
    let beta_v: Vec<Vec<f64>> = (0..nv).map(|w| (0..nv).map(|v| p[d + v][d + w]).collect()).collect();
    let alpha_v: Vec<Vec<f64>> = (0..nv).map(|w| (0..d).map(|s| p[s][d + w]).collect()).collect();
    let f_v: Vec<f64> = e.f_v.iter().flatten().copied().collect();

    let flat: Vec<f64> = beta_v.iter().flatten().copied().collect();
    let singular = |_| Error::Singular(format!("beta^v is singular in block {:?}", e.block));
    // Columns of E = beta_v^{-1} alpha_v, then e = beta_v^{-1} f_v.
    let mut e_mat = vec![vec![0.0; d]; nv];
    for s in 0..d {
        let col: Vec<f64> = alpha_v.iter().map(|row| row[s]).collect();
        let x = dense_solve(nv, &flat, &col).map_err(singular)?;
        for v in 0..nv {
            e_mat[v][s] = x[v];
        }
    }
    let e_vec = dense_solve(nv, &flat, &f_v).map_err(singular)?;

    let mut c = MacroCoefficients::zeros(nc);
    for t in 0..d {
        for s in 0..d {
            let coupled: f64 = (0..nv).map(|v| p[d + v][t] * e_mat[v][s]).sum();
            c.k[t][s] = p[s][t] - coupled;
        }
        let forced: f64 = (0..nv).map(|v| p[d + v][t] * e_vec[v]).sum();
        let base = if t < nc {
            e.f_u[t]
        } else if flags.gradient_source {
            e.f_u_m[(t - nc) / 2][(t - nc) % 2]
        } else {
            0.0
        };
        c.rhs[t] = base - forced;
    }
    Ok((
        c,
        VelocityElimination {
            e_mat,
            e_vec,
            beta_v,
            alpha_v,
            f_v,
        },
    ))
}

/// Bilinear shape functions on the unit reference square, counter-clockwise
/// from the bottom-left vertex: values and reference gradients.
fn shape(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    (
        [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta],
        [
            [-(1.0 - eta), -(1.0 - xi)],
            [1.0 - eta, -xi],
            [eta, xi],
            [-eta, 1.0 - xi],
        ],
    )
}

const GAUSS: [f64; 2] = [0.5 - 0.5 / 1.732_050_807_568_877_2, 0.5 + 0.5 / 1.732_050_807_568_877_2];

/// Nodal coarse field, one vector per continuum over `(m+1)^2` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroField {
    pub m: usize,
    pub nodal: Vec<Vec<f64>>,
}

impl MacroField {
    fn node(&self, a: usize, b: usize) -> usize {
        b * (self.m + 1) + a
    }

    fn block_nodes(&self, bi: usize, bj: usize) -> [usize; 4] {
        let n0 = self.node(bi, bj);
        [n0, n0 + 1, n0 + self.m + 2, n0 + self.m + 1]
    }

    /// Mean of continuum `n` over block `(bi, bj)` (exact for bilinears).
    pub fn block_mean(&self, n: usize, bi: usize, bj: usize) -> f64 {
        self.block_nodes(bi, bj).iter().map(|&k| self.nodal[n][k]).sum::<f64>() * 0.25
    }

    /// `[U_m, d_i U_m]` at the centre of a block.
    pub fn state_at_center(&self, bi: usize, bj: usize) -> Vec<f64> {
        let nc = self.nodal.len();
        let hh = 1.0 / self.m as f64;
        let (phi, dphi) = shape(0.5, 0.5);
        let nodes = self.block_nodes(bi, bj);
        let mut z = vec![0.0; 3 * nc];
        for n in 0..nc {
            for a in 0..4 {
                let u = self.nodal[n][nodes[a]];
                z[n] += phi[a] * u;
                z[nc + 2 * n] += dphi[a][0] / hh * u;
                z[nc + 2 * n + 1] += dphi[a][1] / hh * u;
            }
        }
        z
    }
}

/// Solve the coupled macroscale system with one coefficient set per block,
/// indexed `bj * m + bi`.
pub fn solve_macro(m: usize, coeffs: &[MacroCoefficients]) -> Result<MacroField> {
    if m < 2 || coeffs.len() != m * m {
        return Err(Error::Config(format!("need {} block coefficient sets for M = {m}, got {}", m * m, coeffs.len())));
    }
    let nc = coeffs[0].n_continua;
    if coeffs.iter().any(|c| c.n_continua != nc) {
        return Err(Error::Config("blocks disagree on the number of continua".into()));
    }
    let nn = m + 1;
    let free = |node: usize| -> Option<usize> {
        let (a, b) = (node % nn, node / nn);
        (a > 0 && b > 0 && a < m && b < m).then(|| (b - 1) * (m - 1) + (a - 1))
    };
    let n_unknowns = (m - 1) * (m - 1) * nc;
    let hh = 1.0 / m as f64;
    let weight = 0.25 * hh * hh;
    let mut mat = TripletMatrix::with_capacity(n_unknowns, n_unknowns, 16 * nc * nc * m * m);
    let mut rhs = vec![0.0; n_unknowns];
    let g = |n: usize, i: usize| nc + 2 * n + i;

    for bj in 0..m {
        for bi in 0..m {
            let c = &coeffs[bj * m + bi];
            let n0 = bj * nn + bi;
            let nodes = [n0, n0 + 1, n0 + nn + 1, n0 + nn];
            let mut local = vec![vec![0.0; 4 * nc]; 4 * nc];
            let mut lrhs = vec![0.0; 4 * nc];
            for &xi in &GAUSS {
                for &eta in &GAUSS {
                    let (phi, dref) = shape(xi, eta);
                    let dphi = dref.map(|d| [d[0] / hh, d[1] / hh]);
                    for a in 0..4 {
                        for n in 0..nc {
                            let ra = a * nc + n;
                            let mut r = phi[a] * c.rhs[n];
                            for k in 0..2 {
                                r += dphi[a][k] * c.rhs[g(n, k)];
                            }
                            lrhs[ra] += weight * r;
                            for b in 0..4 {
                                for mm in 0..nc {
                                    let mut s = phi[a] * phi[b] * c.k[n][mm];
                                    for i in 0..2 {
                                        s += phi[a] * dphi[b][i] * c.k[n][g(mm, i)];
                                        s += dphi[a][i] * phi[b] * c.k[g(n, i)][mm];
                                        for k in 0..2 {
                                            s += dphi[a][k] * dphi[b][i] * c.k[g(n, k)][g(mm, i)];
                                        }
                                    }
                                    local[ra][b * nc + mm] += weight * s;
                                }
                            }
                        }
                    }
                }
            }
            for a in 0..4 {
                let Some(fa) = free(nodes[a]) else { continue };
                for n in 0..nc {
                    rhs[fa * nc + n] += lrhs[a * nc + n];
                    for b in 0..4 {
                        let Some(fb) = free(nodes[b]) else { continue };
                        for mm in 0..nc {
                            mat.push(fa * nc + n, fb * nc + mm, local[a * nc + n][b * nc + mm]);
                        }
                    }
                }
            }
        }
    }

    let solver = SparseSolver::lu(&mat)
        .map_err(|e| Error::Singular(format!("coarse operator could not be factored ({e}); coercivity lost?")))?;
    let x = solver.solve(&rhs)?;
    let rel = solver.relative_residual(&x, &rhs);
    if !(rel <= 1e-8) {
        return Err(Error::Singular(format!(
            "coarse solve residual {rel:.2e} above 1e-8; the macroscale operator is near singular"
        )));
    }
    let mut nodal = vec![vec![0.0; nn * nn]; nc];
    for node in 0..nn * nn {
        if let Some(f) = free(node) {
            for n in 0..nc {
                nodal[n][node] = x[f * nc + n];
            }
        }
    }
    Ok(MacroField { m, nodal })
}

/// Which macroscale model produced a [`CoarseSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarsePath {
    ZeroOrder,
    Elliptic,
    Mixed,
}

/// Diagnostics written next to the coarse table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseMeta {
    pub path: CoarsePath,
    pub m: usize,
    pub n_continua: usize,
    pub flags: MacroFlags,
    /// Worst relative residual of the velocity equation (mixed only).
    pub velocity_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSolution {
    pub meta: CoarseMeta,
    /// Block averages `[block][continuum]`, blocks indexed `bj * m + bi`.
    pub block_means: Vec<Vec<f64>>,
    /// Nodal fields (second-order paths only).
    pub field: Option<MacroField>,
    /// Macroscopic velocity at block centres `[block][continuum]` (mixed only).
    pub velocity: Option<Vec<Vec<[f64; 2]>>>,
}

impl CoarseSolution {
    fn from_field(path: CoarsePath, field: MacroField, flags: MacroFlags) -> Self {
        let m = field.m;
        let nc = field.nodal.len();
        let block_means = (0..m * m)
            .map(|b| (0..nc).map(|n| field.block_mean(n, b % m, b / m)).collect())
            .collect();
        Self {
            meta: CoarseMeta {
                path,
                m,
                n_continua: nc,
                flags,
                velocity_residual: None,
            },
            block_means,
            field: Some(field),
            velocity: None,
        }
    }

    /// Text table with one `i j U_1 ... U_N` line per block.
    pub fn write_table(&self, mut w: impl Write) -> Result<()> {
        let m = self.meta.m;
        for (b, means) in self.block_means.iter().enumerate() {
            write!(w, "{} {}", b % m, b / m)?;
            for u in means {
                write!(w, " {u:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Write `<stem>.txt` (table) and `<stem>.json` (metadata) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let table = std::fs::File::create(dir.join(format!("{stem}.txt")))?;
        let mut tw = std::io::BufWriter::new(table);
        self.write_table(&mut tw)?;
        tw.flush()?;
        let meta = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(meta), &self.meta)?;
        Ok(())
    }
}

/// Per-block algebraic solution of the zero-order system.
pub fn solve_zero_order_macro(m: usize, coeffs: &[ZeroOrderEffective]) -> Result<CoarseSolution> {
    let block_means = coeffs.iter().map(|c| c.solve()).collect::<Result<Vec<_>>>()?;
    let nc = block_means.first().map_or(0, |b| b.len());
    Ok(CoarseSolution {
        meta: CoarseMeta {
            path: CoarsePath::ZeroOrder,
            m,
            n_continua: nc,
            flags: MacroFlags::default(),
            velocity_residual: None,
        },
        block_means,
        field: None,
        velocity: None,
    })
}

pub fn solve_elliptic_macro(m: usize, coeffs: &[EllipticEffective], flags: MacroFlags) -> Result<CoarseSolution> {
    let macro_coeffs: Vec<MacroCoefficients> = coeffs.iter().map(|e| MacroCoefficients::from_elliptic(e, flags)).collect();
    let field = solve_macro(m, &macro_coeffs)?;
    Ok(CoarseSolution::from_field(CoarsePath::Elliptic, field, flags))
}

/// Eliminate `V` per block, solve for `U`, then recover `V` at block centres
/// and re-check the velocity equation there.
pub fn solve_mixed_macro(m: usize, coeffs: &[MixedEffective], flags: MacroFlags) -> Result<CoarseSolution> {
    let (macro_coeffs, elims): (Vec<_>, Vec<_>) = coeffs
        .iter()
        .map(|e| mixed_macro_coefficients(e, flags))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let field = solve_macro(m, &macro_coeffs)?;
    let nc = field.nodal.len();
    let mut velocity = Vec::with_capacity(m * m);
    let mut worst = 0.0f64;
    for (b, elim) in elims.iter().enumerate() {
        let z = field.state_at_center(b % m, b / m);
        let v = elim.velocity(&z);
        worst = worst.max(elim.residual(&z, &v));
        velocity.push((0..nc).map(|i| [v[2 * i], v[2 * i + 1]]).collect());
    }
    if !(worst <= 1e-10) {
        return Err(Error::Singular(format!("velocity equation residual {worst:.2e} after elimination")));
    }
    let mut sol = CoarseSolution::from_field(CoarsePath::Mixed, field, flags);
    sol.meta.velocity_residual = Some(worst);
    sol.velocity = Some(velocity);
    Ok(sol)
}
