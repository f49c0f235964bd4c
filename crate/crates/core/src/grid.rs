//! Structured fine/coarse geometry on the unit square.
//!
//! Fine cells are indexed `(i, j)` with `i` along x; flattened indices are
//! row-major (`j * nx + i`). Coarse blocks are square groups of
//! `cells_per_block` fine cells per axis. Regions around a coarse block are
//! rectangles of whole blocks, clipped at the domain boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl FineGrid {
    /// Uniform `n x n` grid on the unit square.
    pub fn square(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Geometry(format!("fine grid needs at least 2 cells per axis, got {n}")));
        }
        Ok(Self {
            nx: n,
            ny: n,
            h: 1.0 / n as f64,
        })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn full_rect(&self) -> CellRect {
        CellRect::new(0, 0, self.nx, self.ny)
    }

    /// Same cell size with `pad` extra cells on every side. The result no
    /// longer covers the unit square; cell `(pad, pad)` sits at the origin's
    /// corner cell of `self`.
    pub fn padded(&self, pad: usize) -> FineGrid {
        FineGrid {
            nx: self.nx + 2 * pad,
            ny: self.ny + 2 * pad,
            h: self.h,
        }
    }
}

/// Index into `0..n` of position `k` after reflecting across the ends
/// (`-1 -> 0`, `n -> n - 1`), repeated as often as needed.
pub fn mirror_index(k: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let r = k.rem_euclid(period);
    (if r < n { r } else { period - 1 - r }) as usize
}

/// Half-open rectangle of fine cells `[i0, i1) x [j0, j1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl CellRect {
    pub fn new(i0: usize, j0: usize, i1: usize, j1: usize) -> Self {
        debug_assert!(i0 <= i1 && j0 <= j1);
        Self { i0, j0, i1, j1 }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.i1 - self.i0
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.j1 - self.j0
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i < self.i1 && j >= self.j0 && j < self.j1
    }

    pub fn contains_rect(&self, other: &CellRect) -> bool {
        other.i0 >= self.i0 && other.i1 <= self.i1 && other.j0 >= self.j0 && other.j1 <= self.j1
    }

    /// Index of a global cell in this rectangle's local row-major numbering.
    #[inline]
    pub fn local_index(&self, i: usize, j: usize) -> usize {
        (j - self.j0) * self.width() + (i - self.i0)
    }

    /// Global `(i, j)` pairs, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.j0..self.j1).flat_map(move |j| (self.i0..self.i1).map(move |i| (i, j)))
    }
}

/// Half-open rectangle of coarse blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl BlockRect {
    pub fn single(bi: usize, bj: usize) -> Self {
        Self {
            i0: bi,
            j0: bj,
            i1: bi + 1,
            j1: bj + 1,
        }
    }

    /// Grow by `layers` blocks on every side, clipped to `[0, m)`.
    pub fn extend(&self, layers: usize, m: usize) -> Self {
        Self {
            i0: self.i0.saturating_sub(layers),
            j0: self.j0.saturating_sub(layers),
            i1: (self.i1 + layers).min(m),
            j1: (self.j1 + layers).min(m),
        }
    }

    #[inline]
    pub fn contains(&self, bi: usize, bj: usize) -> bool {
        bi >= self.i0 && bi < self.i1 && bj >= self.j0 && bj < self.j1
    }

    pub fn n_blocks(&self) -> usize {
        (self.i1 - self.i0) * (self.j1 - self.j0)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.j0..self.j1).flat_map(move |j| (self.i0..self.i1).map(move |i| (i, j)))
    }
}

/// Coarse partition of the fine grid into `m x m` square blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarsePartition {
    pub grid: FineGrid,
    pub m: usize,
    pub cells_per_block: usize,
}

impl CoarsePartition {
    pub fn new(grid: FineGrid, m: usize) -> Result<Self> {
        if m == 0 || grid.nx % m != 0 || grid.ny % m != 0 || grid.nx != grid.ny {
            return Err(Error::Geometry(format!(
                "coarse size 1/{m} is not a multiple of the fine cell size (grid {}x{})",
                grid.nx, grid.ny
            )));
        }
        Ok(Self {
            grid,
            m,
            cells_per_block: grid.nx / m,
        })
    }

    /// Coarse mesh size `H` (`1/M` on the unit square).
    #[inline]
    pub fn coarse_h(&self) -> f64 {
        self.cells_per_block as f64 * self.grid.h
    }

    #[inline]
    pub fn n_blocks(&self) -> usize {
        self.m * self.m
    }

    #[inline]
    pub fn block_index(&self, bi: usize, bj: usize) -> usize {
        bj * self.m + bi
    }

    pub fn block_coords(&self, index: usize) -> (usize, usize) {
        (index % self.m, index / self.m)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.m).flat_map(move |j| (0..self.m).map(move |i| (i, j)))
    }

    pub fn block_of_cell(&self, i: usize, j: usize) -> (usize, usize) {
        (i / self.cells_per_block, j / self.cells_per_block)
    }

    pub fn block_cells(&self, bi: usize, bj: usize) -> CellRect {
        self.rect_cells(&BlockRect::single(bi, bj))
    }

    pub fn rect_cells(&self, r: &BlockRect) -> CellRect {
        let n = self.cells_per_block;
        CellRect::new(r.i0 * n, r.j0 * n, r.i1 * n, r.j1 * n)
    }

    pub fn block_center(&self, bi: usize, bj: usize) -> [f64; 2] {
        let hh = self.coarse_h();
        [(bi as f64 + 0.5) * hh, (bj as f64 + 0.5) * hh]
    }

    /// The partition of the grid padded by `pad` whole blocks per side.
    pub fn padded(&self, pad: usize) -> Result<Self> {
        CoarsePartition::new(self.grid.padded(pad * self.cells_per_block), self.m + 2 * pad)
    }
}

/// Oversampling widths, in coarse layers, for `R+`, `R^V` and `R^I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layers {
    pub l: usize,
    pub l_v: usize,
    pub l_i: usize,
}

impl Layers {
    pub fn new(l: usize, l_v: usize, l_i: usize) -> Result<Self> {
        if !(l_v <= l_i && l_i <= l) {
            return Err(Error::Config(format!(
                "need 0 <= l_V <= l_I <= l, got l={l}, l_V={l_v}, l_I={l_i}"
            )));
        }
        Ok(Self { l, l_v, l_i })
    }

    /// `l_V = l_I = l - 1` (zero when `l = 0`).
    pub fn with_default_inner(l: usize) -> Self {
        let inner = l.saturating_sub(1);
        Self { l, l_v: inner, l_i: inner }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub block: (usize, usize),
    pub cells: CellRect,
    /// Chebyshev distance from the target block, in blocks.
    pub ring: usize,
}

/// Which sides of the requested oversampled region were cut by the domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clipping {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl Clipping {
    pub fn any(&self) -> bool {
        self.left || self.right || self.bottom || self.top
    }
}

/// Nested regions around one coarse block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub block: (usize, usize),
    pub layers: Layers,
    pub target: BlockRect,
    pub oversampled: BlockRect,
    pub velocity: BlockRect,
    pub integration: BlockRect,
    /// Tiles of `R+`, target first, then row-major.
    pub tiles: Vec<Tile>,
    /// Centering constants `c_l`: the centroid of the target block.
    pub center: [f64; 2],
    pub clipping: Clipping,
    pub h: f64,
    pub cells_per_block: usize,
    /// Blocks per axis of the partition.
    pub m: usize,
}

impl RegionSet {
    pub fn cells(&self, r: &BlockRect) -> CellRect {
        let n = self.cells_per_block;
        CellRect::new(r.i0 * n, r.j0 * n, r.i1 * n, r.j1 * n)
    }

    pub fn oversampled_cells(&self) -> CellRect {
        self.cells(&self.oversampled)
    }

    pub fn target_cells(&self) -> CellRect {
        self.cells(&self.target)
    }

    pub fn velocity_cells(&self) -> CellRect {
        self.cells(&self.velocity)
    }

    pub fn integration_cells(&self) -> CellRect {
        self.cells(&self.integration)
    }

    /// Tiles lying inside `r`, with their position in `self.tiles`.
    pub fn tiles_in<'a>(&'a self, r: &'a BlockRect) -> impl Iterator<Item = (usize, &'a Tile)> + 'a {
        self.tiles
            .iter()
            .enumerate()
            .filter(move |(_, t)| r.contains(t.block.0, t.block.1))
    }

    /// Largest ring index present (equals `l` unless clipped on all sides).
    pub fn outer_ring(&self) -> usize {
        self.tiles.iter().map(|t| t.ring).max().unwrap_or(0)
    }

    pub fn area(&self, r: &BlockRect) -> f64 {
        let side = self.cells_per_block as f64 * self.h;
        r.n_blocks() as f64 * side * side
    }
}

pub fn build_regions(partition: &CoarsePartition, block: (usize, usize), layers: Layers) -> Result<RegionSet> {
    let (bi, bj) = block;
    let m = partition.m;
    if bi >= m || bj >= m {
        return Err(Error::Geometry(format!("block {block:?} out of range for a {m}x{m} partition")));
    }
    let layers = Layers::new(layers.l, layers.l_v, layers.l_i)?;
    let target = BlockRect::single(bi, bj);
    let oversampled = target.extend(layers.l, m);
    let velocity = target.extend(layers.l_v, m);
    let integration = target.extend(layers.l_i, m);
    let clipping = Clipping {
        left: bi < layers.l,
        right: bi + layers.l >= m,
        bottom: bj < layers.l,
        top: bj + layers.l >= m,
    };

    let mut tiles = Vec::with_capacity(oversampled.n_blocks());
    tiles.push(Tile {
        block,
        cells: partition.block_cells(bi, bj),
        ring: 0,
    });
    for (ti, tj) in oversampled.blocks() {
        if (ti, tj) == block {
            continue;
        }
        let ring = ti.abs_diff(bi).max(tj.abs_diff(bj));
        tiles.push(Tile {
            block: (ti, tj),
            cells: partition.block_cells(ti, tj),
            ring,
        });
    }

    Ok(RegionSet {
        block,
        layers,
        target,
        oversampled,
        velocity,
        integration,
        tiles,
        center: partition.block_center(bi, bj),
        clipping,
        h: partition.grid.h,
        cells_per_block: partition.cells_per_block,
        m,
    })
}

/// Per-cell continuum labels (0-based internally; 1-based in files and reports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumMap {
    pub grid: FineGrid,
    pub labels: Vec<u8>,
    pub n_continua: usize,
}

impl ContinuumMap {
    pub fn new(grid: FineGrid, labels: Vec<u8>, n_continua: usize) -> Result<Self> {
        if labels.len() != grid.n_cells() {
            return Err(Error::Geometry(format!(
                "continuum map has {} labels for {} cells",
                labels.len(),
                grid.n_cells()
            )));
        }
        if n_continua == 0 || labels.iter().any(|&l| l as usize >= n_continua) {
            return Err(Error::Geometry(format!("continuum labels must lie in 0..{n_continua}")));
        }
        Ok(Self { grid, labels, n_continua })
    }

    pub fn uniform(grid: FineGrid) -> Self {
        Self {
            grid,
            labels: vec![0; grid.n_cells()],
            n_continua: 1,
        }
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize) -> usize {
        self.labels[self.grid.cell_index(i, j)] as usize
    }

    /// Indicator `psi_n` at a cell.
    #[inline]
    pub fn indicator(&self, n: usize, i: usize, j: usize) -> f64 {
        if self.label(i, j) == n {
            1.0
        } else {
            0.0
        }
    }

    pub fn count_in(&self, rect: &CellRect, n: usize) -> usize {
        rect.cells().filter(|&(i, j)| self.label(i, j) == n).count()
    }

    /// Labels reflected across the grid boundary into `pad` extra cells per side.
    pub fn mirror_padded(&self, pad: usize) -> Self {
        let g = self.grid.padded(pad);
        let labels = mirrored(&self.grid, pad, |i, j| self.labels[self.grid.cell_index(i, j)]);
        Self {
            grid: g,
            labels,
            n_continua: self.n_continua,
        }
    }

    /// Labels continued periodically into `pad` extra cells per side.
    pub fn periodic_padded(&self, pad: usize) -> Self {
        let g = self.grid.padded(pad);
        let labels = wrapped(&self.grid, pad, |i, j| self.labels[self.grid.cell_index(i, j)]);
        Self {
            grid: g,
            labels,
            n_continua: self.n_continua,
        }
    }
}

fn wrapped<T>(grid: &FineGrid, pad: usize, at: impl Fn(usize, usize) -> T) -> Vec<T> {
    let g = grid.padded(pad);
    let wrap = |k: usize, n: usize| (k as isize - pad as isize).rem_euclid(n as isize) as usize;
    let mut out = Vec::with_capacity(g.n_cells());
    for j in 0..g.ny {
        let sj = wrap(j, grid.ny);
        for i in 0..g.nx {
            out.push(at(wrap(i, grid.nx), sj));
        }
    }
    out
}

fn mirrored<T>(grid: &FineGrid, pad: usize, at: impl Fn(usize, usize) -> T) -> Vec<T> {
    let g = grid.padded(pad);
    let mut out = Vec::with_capacity(g.n_cells());
    for j in 0..g.ny {
        let sj = mirror_index(j as isize - pad as isize, grid.ny);
        for i in 0..g.nx {
            out.push(at(mirror_index(i as isize - pad as isize, grid.nx), sj));
        }
    }
    out
}

/// Cell-centred scalar values on the whole fine grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: FineGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: FineGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Geometry(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scalar field at cell {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: FineGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    pub fn from_fn(grid: FineGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    /// Values reflected across the grid boundary into `pad` extra cells per side.
    pub fn mirror_padded(&self, pad: usize) -> Self {
        Self {
            grid: self.grid.padded(pad),
            values: mirrored(&self.grid, pad, |i, j| self.at(i, j)),
        }
    }

    /// Values continued periodically into `pad` extra cells per side.
    pub fn periodic_padded(&self, pad: usize) -> Self {
        Self {
            grid: self.grid.padded(pad),
            values: wrapped(&self.grid, pad, |i, j| self.at(i, j)),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell_index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Midpoint-rule moments of the continuum indicators over each tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMoments {
    /// `mass[p][n] = sum over tile p of psi_n h^2`.
    pub mass: Vec<Vec<f64>>,
    /// `first[p][n][l] = sum over tile p of (x_l - c_l) psi_n h^2`.
    pub first: Vec<Vec<[f64; 2]>>,
}

pub fn tile_moments(regions: &RegionSet, continua: &ContinuumMap) -> Result<TileMoments> {
    let grid = &continua.grid;
    let area = grid.cell_area();
    let nc = continua.n_continua;
    let mut mass = Vec::with_capacity(regions.tiles.len());
    let mut first = Vec::with_capacity(regions.tiles.len());
    for tile in &regions.tiles {
        let mut m = vec![0.0; nc];
        let mut f = vec![[0.0; 2]; nc];
        for (i, j) in tile.cells.cells() {
            let n = continua.label(i, j);
            let x = grid.cell_center(i, j);
            m[n] += area;
            f[n][0] += (x[0] - regions.center[0]) * area;
            f[n][1] += (x[1] - regions.center[1]) * area;
        }
        if let Some(n) = m.iter().position(|&v| v == 0.0) {
            return Err(Error::EmptyIntersection {
                tile: tile.block,
                continuum: n + 1,
            });
        }
        mass.push(m);
        first.push(f);
    }
    Ok(TileMoments { mass, first })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(n: usize, m: usize) -> CoarsePartition {
        CoarsePartition::new(FineGrid::square(n).unwrap(), m).unwrap()
    }

    #[test]
    fn interior_block_has_nine_tiles() {
        let p = partition(100, 10);
        let r = build_regions(&p, (5, 5), Layers::new(1, 0, 0).unwrap()).unwrap();
        assert_eq!(r.oversampled, BlockRect { i0: 4, j0: 4, i1: 7, j1: 7 });
        assert_eq!(r.tiles.len(), 9);
        assert_eq!(r.tiles[0].block, (5, 5));
        assert!(!r.clipping.any());
    }

    #[test]
    fn corner_block_is_clipped() {
        let p = partition(100, 10);
        let r = build_regions(&p, (0, 0), Layers::new(1, 0, 0).unwrap()).unwrap();
        assert_eq!(r.oversampled.n_blocks(), 4);
        assert_eq!(r.tiles.len(), 4);
        assert!(r.clipping.left && r.clipping.bottom);
        assert!(!r.clipping.right && !r.clipping.top);
    }

    #[test]
    fn nested_regions() {
        let p = partition(100, 10);
        let r = build_regions(&p, (5, 5), Layers::new(2, 1, 1).unwrap()).unwrap();
        assert_eq!(r.oversampled.n_blocks(), 25);
        assert_eq!(r.velocity, BlockRect { i0: 4, j0: 4, i1: 7, j1: 7 });
        assert_eq!(r.integration, r.velocity);
        assert_eq!(r.tiles_in(&r.velocity).count(), 9);
        assert_eq!(r.outer_ring(), 2);
    }

    #[test]
    fn out_of_range_block_and_bad_layers() {
        let p = partition(40, 4);
        assert!(build_regions(&p, (4, 0), Layers::with_default_inner(1)).is_err());
        assert!(Layers::new(1, 2, 2).is_err());
        assert!(Layers::new(2, 2, 1).is_err());
    }

    #[test]
    fn tiles_cover_each_region() {
        let p = partition(60, 6);
        for block in [(0, 0), (2, 3), (5, 1)] {
            let r = build_regions(&p, block, Layers::new(2, 1, 2).unwrap()).unwrap();
            for rect in [r.oversampled, r.velocity, r.integration, r.target] {
                let cells = r.cells(&rect).n_cells();
                let covered: usize = r.tiles_in(&rect).map(|(_, t)| t.cells.n_cells()).sum();
                assert_eq!(cells, covered);
            }
        }
    }

    #[test]
    fn central_tile_is_centered() {
        let p = partition(70, 7);
        let r = build_regions(&p, (3, 2), Layers::with_default_inner(2)).unwrap();
        let g = p.grid;
        let mut s = [0.0; 2];
        for (i, j) in r.target_cells().cells() {
            let x = g.cell_center(i, j);
            s[0] += (x[0] - r.center[0]) * g.cell_area();
            s[1] += (x[1] - r.center[1]) * g.cell_area();
        }
        assert!(s[0].abs() < 1e-10 && s[1].abs() < 1e-10);
    }

    #[test]
    fn moments_of_full_and_striped_tiles() {
        let p = partition(40, 4);
        let g = p.grid;
        let r = build_regions(&p, (1, 1), Layers::new(1, 0, 0).unwrap()).unwrap();
        let uniform = ContinuumMap::uniform(g);
        let m = tile_moments(&r, &uniform).unwrap();
        let tile_area = 0.25 * 0.25;
        assert!((m.mass[0][0] - tile_area).abs() < 1e-14);
        assert!(m.first[0][0][0].abs() < 1e-14 && m.first[0][0][1].abs() < 1e-14);

        // Horizontal stripes one cell thick, alternating continua.
        let labels = (0..g.n_cells()).map(|k| ((k / g.nx) % 2) as u8).collect();
        let striped = ContinuumMap::new(g, labels, 2).unwrap();
        let m = tile_moments(&r, &striped).unwrap();
        for p_ in 0..r.tiles.len() {
            assert!((m.mass[p_][0] - tile_area / 2.0).abs() < 1e-14);
        }
        // Brute-force second moment for tile 0, continuum 0.
        let mut expect = [0.0; 2];
        for (i, j) in r.tiles[0].cells.cells() {
            if j % 2 == 0 {
                let x = g.cell_center(i, j);
                expect[0] += (x[0] - r.center[0]) * g.h * g.h;
                expect[1] += (x[1] - r.center[1]) * g.h * g.h;
            }
        }
        assert!((m.first[0][0][0] - expect[0]).abs() < 1e-15);
        assert!((m.first[0][0][1] - expect[1]).abs() < 1e-15);
        // Even rows sit half a cell below their odd neighbours.
        assert!((m.first[0][0][1] + 0.5 * g.h * tile_area / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_intersection_is_reported() {
        let p = partition(40, 4);
        let g = p.grid;
        let r = build_regions(&p, (0, 0), Layers::new(1, 0, 0).unwrap()).unwrap();
        let labels = (0..g.n_cells()).map(|k| if k % g.nx < 10 { 0 } else { 1 }).collect();
        let map = ContinuumMap::new(g, labels, 2).unwrap();
        match tile_moments(&r, &map) {
            Err(Error::EmptyIntersection { tile, continuum }) => {
                assert_eq!(tile, (0, 0));
                assert_eq!(continuum, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indicators_partition_unity() {
        let g = FineGrid::square(12).unwrap();
        let labels = (0..g.n_cells()).map(|k| (k % 3) as u8).collect();
        let map = ContinuumMap::new(g, labels, 3).unwrap();
        for (i, j) in g.full_rect().cells() {
            let s: f64 = (0..3).map(|n| map.indicator(n, i, j)).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn mirror_index_reflects_repeatedly() {
        let got: Vec<usize> = (-5..9).map(|k| mirror_index(k, 4)).collect();
        assert_eq!(got, [3, 3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0, 0]);
    }

    #[test]
    fn padded_fields_extend_the_interior() {
        let g = FineGrid::square(4).unwrap();
        let f = ScalarField::from_fn(g, |i, j| (10 * j + i) as f64);
        let m = f.mirror_padded(2);
        let w = f.periodic_padded(2);
        assert_eq!((m.grid.nx, m.grid.ny), (8, 8));
        assert_eq!(m.grid.h, g.h);
        for (i, j) in g.full_rect().cells() {
            assert_eq!(m.at(i + 2, j + 2), f.at(i, j));
            assert_eq!(w.at(i + 2, j + 2), f.at(i, j));
        }
        // Left of column 0: reflection repeats it, wrapping brings in column 3.
        assert_eq!(m.at(1, 2), f.at(0, 0));
        assert_eq!(m.at(0, 2), f.at(1, 0));
        assert_eq!(w.at(1, 2), f.at(3, 0));
        assert_eq!(w.at(0, 0), f.at(2, 2));

        let labels = ContinuumMap::new(g, (0..16).map(|k| u8::from(k % 3 == 0)).collect(), 2).unwrap();
        let lm = labels.mirror_padded(2);
        let lw = labels.periodic_padded(2);
        assert_eq!(lm.label(1, 2), labels.label(0, 0));
        assert_eq!(lw.label(1, 2), labels.label(3, 0));
    }

    #[test]
    fn padded_partition_keeps_block_size() {
        let p = partition(40, 4);
        let q = p.padded(2).unwrap();
        assert_eq!(q.m, 8);
        assert_eq!(q.cells_per_block, p.cells_per_block);
        assert_eq!(q.coarse_h(), p.coarse_h());
        assert_eq!(q.grid.nx, 80);
    }
}
