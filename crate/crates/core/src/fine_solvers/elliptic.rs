//! Bilinear (Q1) conforming elements for `-div(kappa grad u) = f`.
//!
//! Nodes of a cell rectangle are numbered row-major over `(w+1) x (h+1)`
//! vertices. Coefficients and sources are cell-wise constant; loads use the
//! midpoint rule, so a cell contributes `f h^2 / 4` to each of its vertices.

use crate::error::{Error, Result};
use crate::grid::{CellRect, ScalarField};
use crate::linalg::{SparseSolver, TripletMatrix};

/// Element stiffness for unit coefficient on a square, counter-clockwise
/// vertex order starting bottom-left. Independent of the cell size in 2D.
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Which sides of the rectangle carry a homogeneous Dirichlet condition.
/// The remaining sides are natural (zero flux).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirichletSides {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl DirichletSides {
    pub const ALL: Self = Self {
        left: true,
        right: true,
        bottom: true,
        top: true,
    };
    pub const NONE: Self = Self {
        left: false,
        right: false,
        bottom: false,
        top: false,
    };
    pub const X_SIDES: Self = Self {
        left: true,
        right: true,
        bottom: false,
        top: false,
    };
}

/// Vertex numbering of a cell rectangle and the map to free unknowns.
#[derive(Debug, Clone)]
pub struct NodeLayout {
    pub rect: CellRect,
    pub nxn: usize,
    pub nyn: usize,
    free: Vec<Option<usize>>,
    n_free: usize,
}

impl NodeLayout {
    pub fn new(rect: CellRect, sides: DirichletSides) -> Self {
        let nxn = rect.width() + 1;
        let nyn = rect.height() + 1;
        let mut free = Vec::with_capacity(nxn * nyn);
        let mut n_free = 0;
        for b in 0..nyn {
            for a in 0..nxn {
                let fixed = (sides.left && a == 0)
                    || (sides.right && a == nxn - 1)
                    || (sides.bottom && b == 0)
                    || (sides.top && b == nyn - 1);
                if fixed {
                    free.push(None);
                } else {
                    free.push(Some(n_free));
                    n_free += 1;
                }
            }
        }
        Self {
            rect,
            nxn,
            nyn,
            free,
            n_free,
        }
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nxn * self.nyn
    }

    #[inline]
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Vertex index from global vertex coordinates.
    #[inline]
    pub fn node(&self, gi: usize, gj: usize) -> usize {
        (gj - self.rect.j0) * self.nxn + (gi - self.rect.i0)
    }

    #[inline]
    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free[node]
    }

    /// Vertices of global cell `(i, j)`, counter-clockwise from bottom-left.
    #[inline]
    pub fn cell_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        let n0 = self.node(i, j);
        [n0, n0 + 1, n0 + 1 + self.nxn, n0 + self.nxn]
    }

    /// Scatter free values into a full vertex vector (zero on fixed vertices).
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|f| f.map(|k| free_values[k]).unwrap_or(0.0))
            .collect()
    }

    /// Cell averages (mean of the four vertex values) over `sub`.
    pub fn cell_values(&self, nodal: &[f64], sub: &CellRect) -> Vec<f64> {
        sub.cells()
            .map(|(i, j)| self.cell_nodes(i, j).iter().map(|&n| nodal[n]).sum::<f64>() * 0.25)
            .collect()
    }
}

/// Assembled stiffness on the free vertices of a rectangle.
pub struct EllipticOperator {
    pub layout: NodeLayout,
    pub h: f64,
    pub stiffness: TripletMatrix,
}

impl EllipticOperator {
    pub fn assemble(kappa: &ScalarField, rect: CellRect, sides: DirichletSides) -> Result<Self> {
        let layout = NodeLayout::new(rect, sides);
        let mut k = TripletMatrix::with_capacity(layout.n_free(), layout.n_free(), 16 * rect.n_cells());
        for (i, j) in rect.cells() {
            let kc = kappa.at(i, j);
            if !(kc > 0.0) {
                return Err(Error::Singular(format!("coefficient {kc} at cell ({i}, {j}) is not positive")));
            }
            let nodes = layout.cell_nodes(i, j);
            for (a, &na) in nodes.iter().enumerate() {
                let Some(ra) = layout.free_index(na) else { continue };
                for (b, &nb) in nodes.iter().enumerate() {
                    if let Some(rb) = layout.free_index(nb) {
                        k.push(ra, rb, kc * Q1_STIFFNESS[a][b]);
                    }
                }
            }
        }
        Ok(Self {
            layout,
            h: kappa.grid.h,
            stiffness: k,
        })
    }

    /// Midpoint load vector on the free vertices for cell-wise values `f(i, j)`.
    pub fn load(&self, mut f: impl FnMut(usize, usize) -> f64) -> Vec<f64> {
        let mut rhs = vec![0.0; self.layout.n_free()];
        let w = 0.25 * self.h * self.h;
        for (i, j) in self.layout.rect.cells() {
            let fc = f(i, j) * w;
            if fc == 0.0 {
                continue;
            }
            for n in self.layout.cell_nodes(i, j) {
                if let Some(r) = self.layout.free_index(n) {
                    rhs[r] += fc;
                }
            }
        }
        rhs
    }
}

/// `a(u, v) = sum over cells of sub of kappa u_e^T K v_e` for vertex vectors
/// on `layout`. Terms are paired so that `a(u, v)` and `a(v, u)` agree bit
/// for bit.
pub fn q1_energy(kappa: &ScalarField, layout: &NodeLayout, sub: &CellRect, u: &[f64], v: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, j) in sub.cells() {
        let nodes = layout.cell_nodes(i, j);
        let ue = nodes.map(|n| u[n]);
        let ve = nodes.map(|n| v[n]);
        let mut s = 0.0;
        for a in 0..4 {
            s += Q1_STIFFNESS[a][a] * (ue[a] * ve[a]);
            for b in a + 1..4 {
                s += Q1_STIFFNESS[a][b] * (ue[a] * ve[b] + ue[b] * ve[a]);
            }
        }
        total += kappa.at(i, j) * s;
    }
    total
}

/// Element-wise gradient of a Q1 vertex field at a cell centre.
#[inline]
pub fn q1_cell_gradient(layout: &NodeLayout, nodal: &[f64], i: usize, j: usize, h: f64) -> [f64; 2] {
    let [n0, n1, n2, n3] = layout.cell_nodes(i, j);
    let (u0, u1, u2, u3) = (nodal[n0], nodal[n1], nodal[n2], nodal[n3]);
    [0.5 * ((u1 - u0) + (u2 - u3)) / h, 0.5 * ((u3 - u0) + (u2 - u1)) / h]
}

/// Solve the Dirichlet problem on `rect`; returns vertex values.
pub fn solve_q1(
    kappa: &ScalarField,
    f: &ScalarField,
    rect: CellRect,
    sides: DirichletSides,
) -> Result<(NodeLayout, Vec<f64>)> {
    let op = EllipticOperator::assemble(kappa, rect, sides)?;
    let rhs = op.load(|i, j| f.at(i, j));
    let solver = SparseSolver::cholesky(&op.stiffness)?;
    let x = solver.solve(&rhs)?;
    let rel = solver.relative_residual(&x, &rhs);
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm > 0.0 && rel > 1e-10 {
        return Err(Error::Singular(format!("elliptic residual {rel:.2e} above 1e-10")));
    }
    let nodal = op.layout.expand(&x);
    Ok((op.layout, nodal))
}
