use crate::error::{Error, Result};
use crate::linalg::row_rank;

/// One linear functional on the cell unknown vector: the integral over
/// `tile ∩ Ω_continuum` of a scalar (or of one velocity component).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub tile: usize,
    pub continuum: usize,
    /// `None` for scalar (pressure / potential) rows, `Some(s)` for velocity
    /// component `s`.
    pub direction: Option<usize>,
    /// Sorted `(unknown, weight)` pairs.
    pub entries: Vec<(usize, f64)>,
}

impl ConstraintRow {
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(k, w)| w * x[k]).sum()
    }

    fn dot(&self, other: &ConstraintRow) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut p, mut q, mut s) = (0, 0, 0.0);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    s += a[p].1 * b[q].1;
                    p += 1;
                    q += 1;
                }
            }
        }
        s
    }
}

/// Accumulates weights for one row into a dense scratch buffer.
pub(crate) struct RowBuilder {
    scratch: Vec<f64>,
    touched: Vec<usize>,
}

impl RowBuilder {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            scratch: vec![0.0; n],
            touched: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, k: usize, w: f64) {
        if self.scratch[k] == 0.0 {
            self.touched.push(k);
        }
        self.scratch[k] += w;
    }

    pub(crate) fn finish(&mut self) -> Vec<(usize, f64)> {
        self.touched.sort_unstable();
        self.touched.dedup();
        let out = self
            .touched
            .iter()
            .map(|&k| (k, self.scratch[k]))
            .filter(|e| e.1 != 0.0)
            .collect();
        for &k in &self.touched {
            self.scratch[k] = 0.0;
        }
        self.touched.clear();
        out
    }
}

/// The full list of constraint rows of a cell problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub n_unknowns: usize,
    pub rows: Vec<ConstraintRow>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(x)).collect()
    }

    /// `max |C x - g|`.
    pub fn residual(&self, x: &[f64], targets: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(targets)
            .map(|(r, g)| (r.apply(x) - g).abs())
            .fold(0.0, f64::max)
    }

    /// Fails if the rows are linearly dependent (checked on the Gram matrix).
    pub fn check_rank(&self) -> Result<()> {
        let n = self.rows.len();
        if let Some(r) = self.rows.iter().find(|r| r.entries.is_empty()) {
            return Err(Error::RankDeficient(format!(
                "constraint on tile {} continuum {} has no support",
                r.tile,
                r.continuum + 1
            )));
        }
        let mut gram = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a..n {
                let d = self.rows[a].dot(&self.rows[b]);
                gram[a][b] = d;
                gram[b][a] = d;
            }
        }
        let rank = row_rank(&gram, 1e-10);
        if rank < n {
            return Err(Error::RankDeficient(format!("{rank} independent rows out of {n}")));
        }
        Ok(())
    }
}
