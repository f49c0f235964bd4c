//! The full upscaling pipeline, stage by stage.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BoundaryPolicy, CaseSel, ExperimentConfig};
use super::metric::{compute_error, ErrorReport};
use super::parallel::try_map;
use crate::cell_problems::{
    default_quantity_mixed, elliptic_decay, mixed_decay, solve_elliptic_cells, solve_mixed_cells,
    solve_zero_order_cells, CellCache, DecayQuantity, DecayReport, LocalKey,
};
use crate::coarse_solvers::{
    solve_elliptic_macro, solve_mixed_macro, solve_zero_order_macro, CoarsePath, CoarseSolution,
};
use crate::effective::{
    assemble_elliptic, assemble_mixed, assemble_zero_order, EllipticEffective, MixedEffective, ZeroOrderEffective,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::fine_solvers::{solve_elliptic_fine, solve_mixed_fine, solve_zero_order_fine, FineSolution};
use crate::grid::{build_regions, CoarsePartition, FineGrid, Layers, RegionSet, ScalarField};
use crate::media::{gaussian, make_case, make_homogeneous, CaseId, MediumSpec, SourceSpec};

/// Medium, source and partition of one configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub medium: MediumSpec,
    pub source: SourceSpec,
    pub partition: CoarsePartition,
    /// Where the cell problems live (the padded copy when the medium is extended).
    pub local: LocalDomain,
}

/// Medium, source and partition seen by the cell problems. Block `(bi, bj)`
/// of the problem is block `(bi + offset, bj + offset)` here.
#[derive(Debug, Clone)]
pub struct LocalDomain {
    pub medium: MediumSpec,
    pub f: ScalarField,
    pub partition: CoarsePartition,
    pub offset: usize,
}

impl LocalDomain {
    fn new(medium: &MediumSpec, f: &ScalarField, partition: &CoarsePartition, policy: BoundaryPolicy, pad: usize) -> Result<Self> {
        match policy {
            BoundaryPolicy::Clip => Ok(Self {
                medium: medium.clone(),
                f: f.clone(),
                partition: *partition,
                offset: 0,
            }),
            BoundaryPolicy::Extend => {
                let cells = pad * partition.cells_per_block;
                Ok(Self {
                    medium: medium.padded(cells),
                    f: f.mirror_padded(cells),
                    partition: partition.padded(pad)?,
                    offset: pad,
                })
            }
        }
    }

    /// Regions of problem block `block`, relabelled with the problem's block index.
    pub fn regions(&self, block: (usize, usize), layers: Layers) -> Result<RegionSet> {
        if self.offset > 0 && layers.l > self.offset {
            return Err(Error::Geometry(format!(
                "{} oversampling layers exceed the {} padding blocks",
                layers.l, self.offset
            )));
        }
        build_regions(&self.partition, (block.0 + self.offset, block.1 + self.offset), layers)
    }
}

impl Problem {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let grid = FineGrid::square(config.fine_cells())?;
        let (medium, source) = match config.case {
            CaseSel::Homogeneous => {
                let medium = make_homogeneous(&grid, config.kappa)?;
                let f = ScalarField::from_fn(grid, |i, j| gaussian(grid.cell_center(i, j)));
                (medium, SourceSpec { f })
            }
            CaseSel::Layered => make_case(CaseId::Layered, config.eps, &grid, &config.geometry)?,
            CaseSel::Inclusions => make_case(CaseId::Inclusions, config.eps, &grid, &config.geometry)?,
        };
        let partition = CoarsePartition::new(grid, config.m)?;
        let local = LocalDomain::new(&medium, &source.f, &partition, config.boundary, config.layers.l)?;
        Ok(Self {
            config: config.clone(),
            medium,
            source,
            partition,
            local,
        })
    }

    /// Cell-problem regions of a block at the configured layers.
    pub fn regions(&self, block: (usize, usize)) -> Result<RegionSet> {
        self.local.regions(block, self.config.layers)
    }

    /// A local domain with room for `layers` (rebuilt only when the padding
    /// of `self.local` is too small).
    pub fn local_for(&self, layers: Layers) -> Result<std::borrow::Cow<'_, LocalDomain>> {
        if self.config.boundary == BoundaryPolicy::Extend && layers.l > self.local.offset {
            let d = LocalDomain::new(&self.medium, &self.source.f, &self.partition, self.config.boundary, layers.l)?;
            Ok(std::borrow::Cow::Owned(d))
        } else {
            Ok(std::borrow::Cow::Borrowed(&self.local))
        }
    }
}

/// Fine reference matching the coarse path: pointwise for zero order, Q1 for
/// elliptic, two-point flux for mixed.
pub fn fine_reference(problem: &Problem) -> Result<FineSolution> {
    let grid = problem.partition.grid;
    match problem.config.path {
        CoarsePath::ZeroOrder => {
            let u = solve_zero_order_fine(&problem.medium.kappa, &problem.source.f)?;
            Ok(FineSolution {
                grid,
                rect: grid.full_rect(),
                u: u.values,
                nodal: None,
                flux: None,
                velocity: None,
            })
        }
        CoarsePath::Elliptic => solve_elliptic_fine(&problem.medium, &problem.source, grid.full_rect()),
        CoarsePath::Mixed => solve_mixed_fine(&problem.medium, &problem.source, grid.full_rect()),
    }
}

/// Effective coefficients of every block, indexed `bj * M + bi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", content = "blocks", rename_all = "snake_case")]
pub enum BlockTensors {
    ZeroOrder(Vec<ZeroOrderEffective>),
    Elliptic(Vec<EllipticEffective>),
    Mixed(Vec<MixedEffective>),
}

impl BlockTensors {
    pub fn len(&self) -> usize {
        match self {
            BlockTensors::ZeroOrder(v) => v.len(),
            BlockTensors::Elliptic(v) => v.len(),
            BlockTensors::Mixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counters of the cell stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub blocks: usize,
    /// Distinct local problems actually solved (equals `blocks` without cache).
    pub solved: usize,
    /// Worst constraint residual over all stored columns.
    pub max_residual: f64,
}

fn all_blocks(p: &CoarsePartition) -> Vec<(usize, usize)> {
    p.blocks().collect()
}

/// Solve the cell problems of every block and assemble the effective
/// coefficients. Blocks run in parallel; identical local problems are solved
/// once when caching is on.
pub fn upscale(problem: &Problem) -> Result<(BlockTensors, CellStats)> {
    let cfg = &problem.config;
    let blocks = all_blocks(&problem.partition);
    let n_blocks = blocks.len();
    let medium = &problem.local.medium;
    let f = &problem.local.f;
    macro_rules! run {
        ($solve:ident, $assemble:expr, $variant:ident) => {{
            let cache = CellCache::new(cfg.cache);
            let out = try_map(blocks, |b| {
                let regions = problem.regions(b).stage(Stage::CellProblems)?;
                let key = LocalKey::new(medium, &regions);
                let cells = cache.get_or_try_insert(key, || $solve(medium, &regions)).stage(Stage::CellProblems)?;
                let mut eff = $assemble(&regions, &*cells).stage(Stage::Upscaling)?;
                eff.block = b;
                Ok((eff, cells.max_residual))
            })?;
            let solved = if cfg.cache { cache.len() } else { n_blocks };
            let max_residual = out.iter().map(|o| o.1).fold(0.0f64, f64::max);
            let tensors = BlockTensors::$variant(out.into_iter().map(|o| o.0).collect());
            let stats = CellStats {
                blocks: n_blocks,
                solved,
                max_residual,
            };
            Ok((tensors, stats))
        }};
    }
    match cfg.path {
        CoarsePath::ZeroOrder => run!(
            solve_zero_order_cells,
            |r: &RegionSet, c| assemble_zero_order(medium, r, c, f),
            ZeroOrder
        ),
        CoarsePath::Elliptic => run!(
            solve_elliptic_cells,
            |r: &RegionSet, c| assemble_elliptic(medium, r, c, f, &r.target_cells()),
            Elliptic
        ),
        CoarsePath::Mixed => run!(
            solve_mixed_cells,
            |r: &RegionSet, c| assemble_mixed(medium, r, c, f, &r.integration_cells(), &cfg.source_region.cells(r), cfg.divergence),
            Mixed
        ),
    }
}

/// Macroscale solve from per-block tensors.
pub fn coarse_solve(config: &ExperimentConfig, tensors: &BlockTensors) -> Result<CoarseSolution> {
    let m = config.m;
    if tensors.len() != m * m {
        return Err(Error::MissingColumns(format!(
            "{} block tensors for a {m}x{m} partition",
            tensors.len()
        )));
    }
    match tensors {
        BlockTensors::ZeroOrder(t) => solve_zero_order_macro(m, t),
        BlockTensors::Elliptic(t) => solve_elliptic_macro(m, t, config.flags),
        BlockTensors::Mixed(t) => solve_mixed_macro(m, t, config.flags),
    }
}

/// Decay reports of every column of one block at the configured layers.
pub fn block_decay(problem: &Problem, block: (usize, usize), layers: Layers) -> Result<Vec<DecayReport>> {
    let local = problem.local_for(layers)?;
    let regions = local.regions(block, layers)?;
    let medium = &local.medium;
    let mut reports = match problem.config.path {
        CoarsePath::Mixed => {
            let cells = solve_mixed_cells(medium, &regions)?;
            mixed_decay(medium, &regions, &cells, default_quantity_mixed)?
        }
        _ => {
            let cells = solve_elliptic_cells(medium, &regions)?;
            elliptic_decay(medium, &regions, &cells, DecayQuantity::Deviation)
        }
    };
    for r in &mut reports {
        r.block = block;
    }
    Ok(reports)
}

/// Seconds spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub medium: f64,
    pub fine: f64,
    pub cells: f64,
    pub coarse: f64,
    pub total: f64,
}

/// Everything `run_case` produces.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub config: ExperimentConfig,
    pub report: ErrorReport,
    pub coarse: CoarseSolution,
    pub tensors: Arc<BlockTensors>,
    pub cell_stats: CellStats,
    pub timings: Timings,
}

/// Medium, fine reference, cell problems, effective tensors, coarse solve
/// and error metric. Errors carry the label of the stage that failed.
pub fn run_case(config: &ExperimentConfig) -> Result<CaseOutcome> {
    let t0 = Instant::now();
    let problem = Problem::build(config).stage(Stage::Medium)?;
    let t_medium = t0.elapsed().as_secs_f64();

    let t = Instant::now();
    let fine = fine_reference(&problem).stage(Stage::FineReference)?;
    let t_fine = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (tensors, cell_stats) = upscale(&problem)?;
    let t_cells = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let coarse = coarse_solve(config, &tensors).stage(Stage::CoarseSolve)?;
    let t_coarse = t.elapsed().as_secs_f64();

    let report =
        compute_error(&coarse, &fine, &problem.partition, &problem.medium.continua).stage(Stage::ErrorMetric)?;
    Ok(CaseOutcome {
        config: config.clone(),
        report,
        coarse,
        tensors: Arc::new(tensors),
        cell_stats,
        timings: Timings {
            medium: t_medium,
            fine: t_fine,
            cells: t_cells,
            coarse: t_coarse,
            total: t0.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorCategory;

    fn small(path: CoarsePath) -> ExperimentConfig {
        ExperimentConfig {
            case: CaseSel::Homogeneous,
            m: 4,
            n_fine: Some(16),
            layers: Layers { l: 1, l_v: 0, l_i: 0 },
            path,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cache_does_not_change_results() {
        let mut cfg = small(CoarsePath::Elliptic);
        let p = Problem::build(&cfg).unwrap();
        let (a, sa) = upscale(&p).unwrap();
        cfg.cache = false;
        let p = Problem::build(&cfg).unwrap();
        let (b, sb) = upscale(&p).unwrap();
        assert_eq!(a, b);
        assert!(sa.solved < sb.solved);
        assert_eq!(sb.solved, 16);
    }

    #[test]
    fn zero_order_path_is_exact_on_constant_coefficient() {
        let out = run_case(&small(CoarsePath::ZeroOrder)).unwrap();
        assert!(out.report.e2[0] < 1e-12, "{:?}", out.report.e2);
    }

    #[test]
    fn failures_carry_stage_labels() {
        let mut cfg = small(CoarsePath::Mixed);
        cfg.layers = Layers { l: 1, l_v: 1, l_i: 1 };
        let e = run_case(&cfg).unwrap_err();
        assert_eq!(e.category(), ErrorCategory::Config);
        assert!(e.to_string().starts_with("medium construction"), "{e}");
    }
}
