//! Cell-centred two-point flux discretization of
//! `kappa^{-1} v + grad u = 0`, `div v = f`.
//!
//! Unknowns are normal velocities on faces (positive along +x / +y) and
//! cell pressures. On each face `f` between cells `c-` and `c+` the momentum
//! equation integrated over the dual volume reads
//! `M_f v_f + h (u_{c+} - u_{c-}) = 0` with `M_f = h^2 / kappa_f` and
//! `kappa_f` the harmonic mean. A boundary face under `u = 0` uses the half
//! volume `M_f = h^2 / (2 kappa_c)` and a zero outside pressure. Mass balance
//! is `h sum_out v = f h^2`, i.e. `D = -G^T`.

use crate::error::{Error, Result};
use crate::grid::{CellRect, ScalarField};
use crate::linalg::{SparseSolver, TripletMatrix};

/// Boundary treatment on the sides of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxBoundary {
    /// Pressure `u = 0`; boundary faces carry unknown fluxes.
    Dirichlet,
    /// Zero normal flux; boundary faces are removed.
    NoFlux,
}

/// Face numbering of a cell rectangle: x-normal faces first, then y-normal.
#[derive(Debug, Clone)]
pub struct FaceLayout {
    pub rect: CellRect,
    pub w: usize,
    pub ht: usize,
    pub n_x_faces: usize,
    pub n_faces: usize,
    active: Vec<Option<usize>>,
    /// Face index of each active unknown.
    pub active_faces: Vec<usize>,
}

impl FaceLayout {
    pub fn new(rect: CellRect, boundary: FluxBoundary) -> Self {
        let w = rect.width();
        let ht = rect.height();
        let n_x_faces = (w + 1) * ht;
        let n_faces = n_x_faces + w * (ht + 1);
        let mut layout = Self {
            rect,
            w,
            ht,
            n_x_faces,
            n_faces,
            active: Vec::with_capacity(n_faces),
            active_faces: Vec::new(),
        };
        for f in 0..n_faces {
            let (minus, plus) = layout.face_cells(f);
            let keep = boundary == FluxBoundary::Dirichlet || (minus.is_some() && plus.is_some());
            if keep {
                layout.active.push(Some(layout.active_faces.len()));
                layout.active_faces.push(f);
            } else {
                layout.active.push(None);
            }
        }
        layout
    }

    #[inline]
    pub fn n_active(&self) -> usize {
        self.active_faces.len()
    }

    #[inline]
    pub fn active_index(&self, face: usize) -> Option<usize> {
        self.active[face]
    }

    /// x-normal face at local vertex column `a` (0..=w), cell row `b`.
    #[inline]
    pub fn x_face(&self, a: usize, b: usize) -> usize {
        b * (self.w + 1) + a
    }

    /// y-normal face at local cell column `a`, vertex row `b` (0..=ht).
    #[inline]
    pub fn y_face(&self, a: usize, b: usize) -> usize {
        self.n_x_faces + b * self.w + a
    }

    /// Normal direction of a face: 0 for x, 1 for y.
    #[inline]
    pub fn direction(&self, face: usize) -> usize {
        usize::from(face >= self.n_x_faces)
    }

    /// Local cell indices on the minus and plus side of a face.
    pub fn face_cells(&self, face: usize) -> (Option<usize>, Option<usize>) {
        if face < self.n_x_faces {
            let b = face / (self.w + 1);
            let a = face % (self.w + 1);
            let minus = (a > 0).then(|| b * self.w + a - 1);
            let plus = (a < self.w).then(|| b * self.w + a);
            (minus, plus)
        } else {
            let k = face - self.n_x_faces;
            let b = k / self.w;
            let a = k % self.w;
            let minus = (b > 0).then(|| (b - 1) * self.w + a);
            let plus = (b < self.ht).then(|| b * self.w + a);
            (minus, plus)
        }
    }

    /// Faces of a local cell: `[left, right, bottom, top]`.
    #[inline]
    pub fn cell_faces(&self, local: usize) -> [usize; 4] {
        let a = local % self.w;
        let b = local / self.w;
        [self.x_face(a, b), self.x_face(a + 1, b), self.y_face(a, b), self.y_face(a, b + 1)]
    }
}

/// Assembled mixed blocks on a rectangle.
pub struct MixedOperator {
    pub layout: FaceLayout,
    pub h: f64,
    /// Diagonal mass entry per active face.
    pub mass: Vec<f64>,
    /// Gradient entries `(active face, local cell, value)`; divergence is the
    /// negative transpose.
    pub grad: Vec<(usize, usize, f64)>,
}

impl MixedOperator {
    pub fn assemble(kappa: &ScalarField, rect: CellRect, boundary: FluxBoundary) -> Result<Self> {
        let layout = FaceLayout::new(rect, boundary);
        let h = kappa.grid.h;
        let kloc = |local: usize| {
            let i = rect.i0 + local % rect.width();
            let j = rect.j0 + local / rect.width();
            kappa.at(i, j)
        };
        if let Some((i, j)) = rect.cells().find(|&(i, j)| !(kappa.at(i, j) > 0.0)) {
            return Err(Error::Singular(format!(
                "coefficient {} at cell ({i}, {j}) is not positive",
                kappa.at(i, j)
            )));
        }
        let mut mass = Vec::with_capacity(layout.n_active());
        let mut grad = Vec::with_capacity(2 * layout.n_active());
        for (r, &f) in layout.active_faces.iter().enumerate() {
            let (minus, plus) = layout.face_cells(f);
            let m = match (minus, plus) {
                (Some(a), Some(b)) => {
                    let (ka, kb) = (kloc(a), kloc(b));
                    let kf = 2.0 * ka * kb / (ka + kb);
                    h * h / kf
                }
                (Some(c), None) | (None, Some(c)) => h * h / (2.0 * kloc(c)),
                (None, None) => unreachable!(),
            };
            mass.push(m);
            if let Some(c) = minus {
                grad.push((r, c, -h));
            }
            if let Some(c) = plus {
                grad.push((r, c, h));
            }
        }
        Ok(Self { layout, h, mass, grad })
    }

    pub fn n_cells(&self) -> usize {
        self.layout.rect.n_cells()
    }

    /// Insert `[M G; D 0]` into `t` with the velocity block at `v_off` and
    /// pressure block at `u_off`.
    pub fn push_saddle(&self, t: &mut TripletMatrix, v_off: usize, u_off: usize) {
        for (r, &m) in self.mass.iter().enumerate() {
            t.push(v_off + r, v_off + r, m);
        }
        for &(r, c, g) in &self.grad {
            t.push(v_off + r, u_off + c, g);
            t.push(u_off + c, v_off + r, -g);
        }
    }

    /// `(G u)` on active faces.
    pub fn apply_grad(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.n_active()];
        for &(r, c, g) in &self.grad {
            out[r] += g * u[c];
        }
        out
    }

    /// `(D v)` on cells.
    pub fn apply_div(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cells()];
        for &(r, c, g) in &self.grad {
            out[c] -= g * v[r];
        }
        out
    }

    /// Scatter active face values into a full face vector.
    pub fn expand_faces(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.n_faces];
        for (r, &f) in self.layout.active_faces.iter().enumerate() {
            out[f] = v[r];
        }
        out
    }

    /// Cell-centre velocity from a full face vector: mean of opposite faces.
    pub fn cell_velocity(&self, faces: &[f64]) -> Vec<[f64; 2]> {
        (0..self.n_cells())
            .map(|c| {
                let [l, r, b, t] = self.layout.cell_faces(c);
                [0.5 * (faces[l] + faces[r]), 0.5 * (faces[b] + faces[t])]
            })
            .collect()
    }

    /// Solve the pressure-Dirichlet problem via the SPD Schur complement
    /// `G^T M^{-1} G u = h^2 f`; returns `(active face fluxes, cell pressures)`.
    pub fn solve_dirichlet(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nc = self.n_cells();
        let mut by_face: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.layout.n_active()];
        for &(r, c, g) in &self.grad {
            by_face[r].push((c, g));
        }
        let mut s = TripletMatrix::with_capacity(nc, nc, 4 * self.layout.n_active());
        for (r, entries) in by_face.iter().enumerate() {
            let inv = 1.0 / self.mass[r];
            for &(a, ga) in entries {
                for &(b, gb) in entries {
                    s.push(a, b, ga * inv * gb);
                }
            }
        }
        let rhs: Vec<f64> = f.iter().map(|v| v * self.h * self.h).collect();
        let solver = SparseSolver::cholesky(&s)?;
        let u = solver.solve(&rhs)?;
        let rel = solver.relative_residual(&u, &rhs);
        if rhs.iter().any(|&v| v != 0.0) && rel > 1e-10 {
            return Err(Error::Singular(format!("mixed residual {rel:.2e} above 1e-10")));
        }
        let gu = self.apply_grad(&u);
        let v: Vec<f64> = gu.iter().zip(&self.mass).map(|(g, m)| -g / m).collect();
        Ok((v, u))
    }
}
