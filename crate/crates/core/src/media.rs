//! Microstructures and source terms.
//!
//! Continuum 1 (label 0) is the low-permeability set, continuum 2 (label 1)
//! the high-permeability one. All fields are sampled at fine cell centres.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ContinuumMap, FineGrid, ScalarField};

/// Which of the two periodic microstructures to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseId {
    /// Periodic layers.
    Layered,
    /// Periodic square inclusions of the low-permeability phase.
    Inclusions,
}

impl CaseId {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(CaseId::Layered),
            2 => Ok(CaseId::Inclusions),
            _ => Err(Error::Config(format!("unknown case {n}; expected 1 or 2"))),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            CaseId::Layered => 1,
            CaseId::Inclusions => 2,
        }
    }
}

/// Direction in which the layers of the layered case run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Layers parallel to the x axis (properties vary with y).
    Horizontal,
    /// Layers parallel to the y axis.
    Vertical,
}

/// Geometry knobs for the periodic cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Fraction of each period occupied by the low-permeability layer.
    pub layer_fraction: f64,
    pub orientation: Orientation,
    /// Inclusion side length as a fraction of the period.
    pub inclusion_side: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            layer_fraction: 0.5,
            orientation: Orientation::Horizontal,
            inclusion_side: 0.5,
        }
    }
}

/// Coefficient field with its continuum decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    /// Period of the microstructure (`None` for non-periodic media).
    pub eps: Option<f64>,
    pub kappa: ScalarField,
    pub continua: ContinuumMap,
}

impl MediumSpec {
    pub fn new(eps: Option<f64>, kappa: ScalarField, continua: ContinuumMap) -> Result<Self> {
        if kappa.grid != continua.grid {
            return Err(Error::Geometry("coefficient and continuum grids differ".into()));
        }
        if let Some(k) = kappa.values.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Config(format!("coefficient must be positive, cell {k} has {}", kappa.values[k])));
        }
        Ok(Self { eps, kappa, continua })
    }

    pub fn grid(&self) -> FineGrid {
        self.kappa.grid
    }

    pub fn n_continua(&self) -> usize {
        self.continua.n_continua
    }

    /// `max kappa / min kappa`.
    pub fn contrast(&self) -> f64 {
        self.kappa.max() / self.kappa.min()
    }

    /// The medium reflected across the domain boundary into `pad` extra
    /// cells per side.
    pub fn mirror_padded(&self, pad: usize) -> Self {
        Self {
            eps: self.eps,
            kappa: self.kappa.mirror_padded(pad),
            continua: self.continua.mirror_padded(pad),
        }
    }

    /// The medium continued into `pad` extra cells per side: periodically
    /// when it has a period that tiles the grid, by reflection otherwise.
    pub fn padded(&self, pad: usize) -> Self {
        let grid = self.grid();
        let periodic = self.eps.is_some_and(|eps| cells_per_period(eps, &grid).is_ok_and(|np| grid.nx % np == 0 && grid.ny % np == 0));
        if periodic {
            Self {
                eps: self.eps,
                kappa: self.kappa.periodic_padded(pad),
                continua: self.continua.periodic_padded(pad),
            }
        } else {
            self.mirror_padded(pad)
        }
    }

    /// Same coefficient field with a different continuum decomposition.
    pub fn relabel(&self, continua: ContinuumMap) -> Result<Self> {
        Self::new(self.eps, self.kappa.clone(), continua)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub f: ScalarField,
}

/// Coefficient values of the periodic cases: `eps / 10^4` and `1 / (100 eps)`.
pub fn case_kappa(eps: f64) -> [f64; 2] {
    [eps / 10000.0, 1.0 / (100.0 * eps)]
}

/// Number of fine cells per period, checking that the grid resolves `eps`.
pub fn cells_per_period(eps: f64, grid: &FineGrid) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("period must lie in (0, 1], got {eps}")));
    }
    let periods = 1.0 / eps;
    if (periods - periods.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("period {eps} does not divide the unit square")));
    }
    let np = eps / grid.h;
    if (np - np.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "period {eps} is not a whole number of fine cells (h = {})",
            grid.h
        )));
    }
    let np = np.round() as usize;
    if np < 8 {
        return Err(Error::Config(format!("period {eps} is resolved by only {np} cells; need at least 8")));
    }
    Ok(np)
}

/// Continuum labels of a periodic case (0 = low, 1 = high).
pub fn case_labels(case: CaseId, eps: f64, grid: &FineGrid, geometry: &Geometry) -> Result<ContinuumMap> {
    let np = cells_per_period(eps, grid)?;
    let labels: Vec<u8> = match case {
        CaseId::Layered => {
            if !(geometry.layer_fraction > 0.0 && geometry.layer_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "layer fraction must lie in (0, 1), got {}",
                    geometry.layer_fraction
                )));
            }
            let w = band_width(np, geometry.layer_fraction)?;
            let start = (np - w) / 2;
            let mut labels = Vec::with_capacity(grid.n_cells());
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let t = match geometry.orientation {
                        Orientation::Horizontal => j % np,
                        Orientation::Vertical => i % np,
                    };
                    labels.push(if t >= start && t < start + w { 0 } else { 1 });
                }
            }
            labels
        }
        CaseId::Inclusions => {
            if !(geometry.inclusion_side > 0.0 && geometry.inclusion_side < 1.0) {
                return Err(Error::Config(format!(
                    "inclusion side must lie in (0, 1), got {}",
                    geometry.inclusion_side
                )));
            }
            let w = band_width(np, geometry.inclusion_side)?;
            let start = (np - w) / 2;
            let inside = |t: usize| t >= start && t < start + w;
            let mut labels = Vec::with_capacity(grid.n_cells());
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    labels.push(if inside(i % np) && inside(j % np) { 0 } else { 1 });
                }
            }
            labels
        }
    };
    ContinuumMap::new(*grid, labels, 2)
}

fn band_width(np: usize, fraction: f64) -> Result<usize> {
    let w = (fraction * np as f64).round() as usize;
    if w == 0 || w >= np {
        return Err(Error::Config(format!(
            "fraction {fraction} leaves an empty phase with {np} cells per period"
        )));
    }
    Ok(w)
}

/// Two-valued medium on the given labels: `values[n]` on continuum `n`.
pub fn piecewise_medium(eps: Option<f64>, continua: ContinuumMap, values: &[f64]) -> Result<MediumSpec> {
    if values.len() != continua.n_continua {
        return Err(Error::Config(format!(
            "{} coefficient values for {} continua",
            values.len(),
            continua.n_continua
        )));
    }
    let grid = continua.grid;
    let kappa = ScalarField::new(grid, continua.labels.iter().map(|&l| values[l as usize]).collect())?;
    MediumSpec::new(eps, kappa, continua)
}

/// The Gaussian bump `exp(-40 |(x-1/2)^2 + (y-1/2)^2|)`.
pub fn gaussian(x: [f64; 2]) -> f64 {
    (-40.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).abs()).exp()
}

/// Source of the periodic cases: the Gaussian on continuum 2 and
/// `1000 min(kappa)` times it on continuum 1.
pub fn case_source(medium: &MediumSpec) -> SourceSpec {
    let grid = medium.grid();
    let kmin = medium.kappa.min();
    let f = ScalarField::from_fn(grid, |i, j| {
        let g = gaussian(grid.cell_center(i, j));
        if medium.continua.label(i, j) == 0 {
            1000.0 * kmin * g
        } else {
            g
        }
    });
    SourceSpec { f }
}

/// Build one of the periodic cases with its standard coefficients.
pub fn make_case(case: CaseId, eps: f64, grid: &FineGrid, geometry: &Geometry) -> Result<(MediumSpec, SourceSpec)> {
    let continua = case_labels(case, eps, grid, geometry)?;
    let medium = piecewise_medium(Some(eps), continua, &case_kappa(eps))?;
    let source = case_source(&medium);
    Ok((medium, source))
}

/// Layered case with the default 50/50 horizontal layers.
pub fn make_case1(eps: f64, grid: &FineGrid) -> Result<(MediumSpec, SourceSpec)> {
    make_case(CaseId::Layered, eps, grid, &Geometry::default())
}

/// Inclusion case with centred squares of half the period.
pub fn make_case2(eps: f64, grid: &FineGrid) -> Result<(MediumSpec, SourceSpec)> {
    make_case(CaseId::Inclusions, eps, grid, &Geometry::default())
}

/// Single continuum with constant coefficient.
pub fn make_homogeneous(grid: &FineGrid, value: f64) -> Result<MediumSpec> {
    MediumSpec::new(None, ScalarField::constant(*grid, value), ContinuumMap::uniform(*grid))
}

const RASTER_MAGIC: &str = "mchom-raster v1";

/// Plain-text raster: a header line then one `continuum kappa` record per cell,
/// row-major from the bottom row, continuum indices 1-based.
pub fn write_raster(medium: &MediumSpec, mut w: impl Write) -> Result<()> {
    let grid = medium.grid();
    let mut s = String::with_capacity(grid.n_cells() * 24);
    writeln!(s, "{RASTER_MAGIC}, {} {}", grid.nx, grid.ny).unwrap();
    for (l, k) in medium.continua.labels.iter().zip(&medium.kappa.values) {
        writeln!(s, "{} {}", *l as usize + 1, k).unwrap();
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_raster(r: impl BufRead, eps: Option<f64>) -> Result<MediumSpec> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty raster".into()))??;
    let rest = header
        .trim()
        .strip_prefix(RASTER_MAGIC)
        .and_then(|s| s.strip_prefix(','))
        .ok_or_else(|| Error::Parse(format!("bad raster header {header:?}")))?;
    let dims: Vec<usize> = rest
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad raster size {t:?}"))))
        .collect::<Result<_>>()?;
    let [nx, ny] = dims[..] else {
        return Err(Error::Parse(format!("raster header needs two sizes, got {rest:?}")));
    };
    if nx != ny || nx < 2 {
        return Err(Error::Parse(format!("raster must be square with at least 2 cells, got {nx}x{ny}")));
    }
    let grid = FineGrid::square(nx)?;
    let mut labels = Vec::with_capacity(grid.n_cells());
    let mut values = Vec::with_capacity(grid.n_cells());
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let mut it = t.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Parse(format!("raster line {}: expected two fields", lineno + 2)));
        };
        let c: usize = a
            .parse()
            .map_err(|_| Error::Parse(format!("raster line {}: bad continuum {a:?}", lineno + 2)))?;
        let k: f64 = b
            .parse()
            .map_err(|_| Error::Parse(format!("raster line {}: bad value {b:?}", lineno + 2)))?;
        if c == 0 || c > u8::MAX as usize {
            return Err(Error::Parse(format!("raster line {}: continuum index {c} out of range", lineno + 2)));
        }
        labels.push((c - 1) as u8);
        values.push(k);
    }
    if labels.len() != grid.n_cells() {
        return Err(Error::Parse(format!(
            "raster declares {} cells but has {} records",
            grid.n_cells(),
            labels.len()
        )));
    }
    let n_continua = *labels.iter().max().unwrap() as usize + 1;
    let continua = ContinuumMap::new(grid, labels, n_continua)?;
    MediumSpec::new(eps, ScalarField::new(grid, values)?, continua)
}

pub fn save_raster(medium: &MediumSpec, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_raster(medium, std::io::BufWriter::new(f))
}

pub fn load_raster(path: &Path, eps: Option<f64>) -> Result<MediumSpec> {
    let f = std::fs::File::open(path)?;
    read_raster(std::io::BufReader::new(f), eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case1_values_and_source() {
        let g = FineGrid::square(100).unwrap();
        let (m, s) = make_case1(0.1, &g).unwrap();
        let k = case_kappa(0.1);
        assert!((k[0] - 1e-5).abs() < 1e-20 && (k[1] - 0.1).abs() < 1e-15);
        assert!((m.contrast() - 100.0 / 0.01).abs() < 1e-8 * 1e4);
        // Layer band is rows 2..7 of every 10, so the cell just above the
        // centre (row 50) is high and row 52 is low.
        assert_eq!(m.continua.label(50, 50), 1);
        assert_eq!(m.continua.label(50, 52), 0);
        let g50 = gaussian(g.cell_center(50, 50));
        assert!((s.f.at(50, 50) - g50).abs() < 1e-15);
        let g52 = gaussian(g.cell_center(50, 52));
        assert!((s.f.at(50, 52) - 1000.0 * 1e-5 * g52).abs() < 1e-18);
        assert_eq!(gaussian([0.5, 0.5]), 1.0);
        let low = m.continua.labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(low * 2, g.n_cells());
    }

    #[test]
    fn case2_volume_fraction() {
        let g = FineGrid::square(80).unwrap();
        let (m, _) = make_case2(0.1, &g).unwrap();
        let low = m.continua.labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(low * 4, g.n_cells());
        assert_eq!(m.kappa.min(), 1e-5);
    }

    #[test]
    fn under_resolved_and_bad_period() {
        let g = FineGrid::square(40).unwrap();
        assert!(make_case1(0.1, &g).is_err());
        assert!(make_case1(0.3, &FineGrid::square(90).unwrap()).is_err());
        let geo = Geometry {
            layer_fraction: 0.01,
            ..Geometry::default()
        };
        assert!(make_case(CaseId::Layered, 0.1, &FineGrid::square(100).unwrap(), &geo).is_err());
    }

    #[test]
    fn raster_round_trip() {
        let g = FineGrid::square(20).unwrap();
        let (m, _) = make_case2(0.5, &g).unwrap();
        let mut buf = Vec::new();
        write_raster(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("mchom-raster v1, 20 20\n"));
        let back = read_raster(&buf[..], Some(0.5)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn raster_errors() {
        assert!(read_raster(&b"mchom-raster v2, 2 2\n"[..], None).is_err());
        assert!(read_raster(&b"mchom-raster v1, 2 2\n1 1\n"[..], None).is_err());
        assert!(read_raster(&b"mchom-raster v1, 2 2\n1 1\n1 1\n1 1\n0 1\n"[..], None).is_err());
        assert!(read_raster(&b"mchom-raster v1, 2 2\n1 1\n1 1\n1 1\n1 -1\n"[..], None).is_err());
    }
}
