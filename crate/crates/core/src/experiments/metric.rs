//! Relative block-average error between coarse and fine solutions.

use serde::{Deserialize, Serialize};

use crate::coarse_solvers::CoarseSolution;
use crate::error::{Error, Result};
use crate::fine_solvers::FineSolution;
use crate::grid::{CoarsePartition, ContinuumMap};

/// Coarse and reference value of one block and continuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockPair {
    pub coarse: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Square-root variant per continuum (the headline number).
    pub e2: Vec<f64>,
    /// Ratio of sums without the square root.
    pub e2_sq: Vec<f64>,
    /// `[block][continuum]`, `None` where the block holds no such cells.
    pub per_block: Vec<Vec<Option<BlockPair>>>,
    /// `(block index, continuum)` pairs left out of the sums.
    pub excluded: Vec<(usize, usize)>,
}

impl ErrorReport {
    /// Human-readable notes for the excluded pairs.
    pub fn warnings(&self, m: usize) -> Vec<String> {
        self.excluded
            .iter()
            .map(|&(b, n)| format!("block ({}, {}) has no cells of continuum {}; left out of e2", b % m, b / m, n + 1))
            .collect()
    }
}

/// Mean of the fine solution over `K ∩ Omega_n` for every block, `None` when
/// the intersection is empty.
pub fn fine_block_means(
    fine: &FineSolution,
    partition: &CoarsePartition,
    continua: &ContinuumMap,
) -> Result<Vec<Vec<Option<f64>>>> {
    if fine.rect != partition.grid.full_rect() || continua.grid != partition.grid {
        return Err(Error::Geometry("fine solution, labels and partition must cover the same grid".into()));
    }
    let nc = continua.n_continua;
    Ok(partition
        .blocks()
        .map(|(bi, bj)| {
            let mut sum = vec![0.0; nc];
            let mut count = vec![0usize; nc];
            for (i, j) in partition.block_cells(bi, bj).cells() {
                let n = continua.label(i, j);
                sum[n] += fine.at(i, j);
                count[n] += 1;
            }
            (0..nc).map(|n| (count[n] > 0).then(|| sum[n] / count[n] as f64)).collect()
        })
        .collect())
}

/// `e2_i = sum_K |U_i - mean_{K ∩ Omega_i} u|^2 / sum_K |mean_{K ∩ Omega_i} u|^2`
/// over blocks `K` that contain continuum `i`.
pub fn compute_error(
    coarse: &CoarseSolution,
    fine: &FineSolution,
    partition: &CoarsePartition,
    continua: &ContinuumMap,
) -> Result<ErrorReport> {
    let nc = continua.n_continua;
    if coarse.meta.n_continua != nc || coarse.meta.m != partition.m || coarse.block_means.len() != partition.n_blocks() {
        return Err(Error::Geometry(format!(
            "coarse solution ({} continua, M = {}) does not match partition (M = {}) with {nc} continua",
            coarse.meta.n_continua, coarse.meta.m, partition.m
        )));
    }
    let truth = fine_block_means(fine, partition, continua)?;
    let mut num = vec![0.0; nc];
    let mut den = vec![0.0; nc];
    let mut excluded = Vec::new();
    let mut per_block = Vec::with_capacity(truth.len());
    for (b, (t_row, u_row)) in truth.iter().zip(&coarse.block_means).enumerate() {
        let mut row = Vec::with_capacity(nc);
        for n in 0..nc {
            match t_row[n] {
                Some(t) => {
                    let u = u_row[n];
                    num[n] += (u - t) * (u - t);
                    den[n] += t * t;
                    row.push(Some(BlockPair { coarse: u, truth: t }));
                }
                None => {
                    excluded.push((b, n));
                    row.push(None);
                }
            }
        }
        per_block.push(row);
    }
    let mut e2_sq = Vec::with_capacity(nc);
    for n in 0..nc {
        if !(den[n] > 0.0) {
            return Err(Error::NonFinite(format!(
                "error metric for continuum {}: reference block averages are all zero",
                n + 1
            )));
        }
        e2_sq.push(num[n] / den[n]);
    }
    Ok(ErrorReport {
        e2: e2_sq.iter().map(|v| v.sqrt()).collect(),
        e2_sq,
        per_block,
        excluded,
    })
}
