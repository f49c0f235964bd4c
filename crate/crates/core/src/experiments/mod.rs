//! Case orchestration, error metrics and result tables.

pub mod config;
pub mod metric;
pub mod parallel;
pub mod pipeline;
pub mod report;

pub use config::{default_layers, parse_kv, BoundaryPolicy, CaseSel, ExperimentConfig};
pub use metric::{compute_error, fine_block_means, BlockPair, ErrorReport};
pub use parallel::{resolve_threads, try_map, with_threads, THREADS_ENV};
pub use pipeline::{
    block_decay, coarse_solve, fine_reference, run_case, upscale, BlockTensors, CaseOutcome, CellStats, Problem,
    Timings,
};
pub use report::{append_csv, read_csv, CsvRow, RunManifest, CSV_HEADER};

use crate::error::Result;

/// `H = eps = 1/M` for each `M`.
pub fn diagonal_sweep(base: &ExperimentConfig, ms: &[usize]) -> Vec<ExperimentConfig> {
    ms.iter()
        .map(|&m| ExperimentConfig {
            m,
            eps: 1.0 / m as f64,
            ..base.clone()
        })
        .collect()
}

/// Fixed `H`, varying period.
pub fn period_sweep(base: &ExperimentConfig, eps: &[f64]) -> Vec<ExperimentConfig> {
    eps.iter()
        .map(|&e| ExperimentConfig {
            eps: e,
            ..base.clone()
        })
        .collect()
}

/// Run independent configurations concurrently; outcomes keep input order.
pub fn run_sweep(configs: &[ExperimentConfig]) -> Result<Vec<CaseOutcome>> {
    for c in configs {
        c.validate()?;
    }
    try_map(configs.to_vec(), |c| run_case(&c))
}
