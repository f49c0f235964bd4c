//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are case
//! insensitive; later assignments override earlier ones, so command-line
//! overrides are applied simply by merging them last.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coarse_solvers::{CoarsePath, MacroFlags};
use crate::effective::{DivergenceForm, IntegrationRegion};
use crate::error::{Error, Result};
use crate::grid::Layers;
use crate::media::{Geometry, Orientation};

/// Which medium a run is built on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseSel {
    /// Constant coefficient, one continuum, Gaussian source.
    Homogeneous,
    Layered,
    Inclusions,
}

impl CaseSel {
    /// Number written to the CSV `case` column.
    pub fn number(self) -> u32 {
        match self {
            CaseSel::Homogeneous => 0,
            CaseSel::Layered => 1,
            CaseSel::Inclusions => 2,
        }
    }
}

impl FromStr for CaseSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "homogeneous" => Ok(CaseSel::Homogeneous),
            "1" | "layered" => Ok(CaseSel::Layered),
            "2" | "inclusions" => Ok(CaseSel::Inclusions),
            other => Err(Error::Config(format!("unknown case '{other}' (expected 0, 1 or 2)"))),
        }
    }
}

impl fmt::Display for CaseSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// How oversampled regions of blocks next to the domain boundary are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Cut the region at the boundary and drop the missing tiles.
    Clip,
    /// Continue the medium past the boundary so every block sees a full
    /// region: periodic media periodically, others (and the source) by
    /// reflection.
    Extend,
}

impl FromStr for BoundaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clip" => Ok(BoundaryPolicy::Clip),
            "extend" => Ok(BoundaryPolicy::Extend),
            other => Err(Error::Config(format!("unknown boundary policy '{other}' (clip | extend)"))),
        }
    }
}

fn path_name(p: CoarsePath) -> &'static str {
    match p {
        CoarsePath::ZeroOrder => "zero_order",
        CoarsePath::Elliptic => "elliptic",
        CoarsePath::Mixed => "mixed",
    }
}

fn parse_path(s: &str) -> Result<CoarsePath> {
    match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "zero_order" | "zero" => Ok(CoarsePath::ZeroOrder),
        "elliptic" => Ok(CoarsePath::Elliptic),
        "mixed" => Ok(CoarsePath::Mixed),
        other => Err(Error::Config(format!("unknown path '{other}' (zero_order, elliptic, mixed)"))),
    }
}

/// Everything needed to reproduce one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: CaseSel,
    /// Coarse blocks per axis; `H = 1/M`.
    pub m: usize,
    /// Period of the microstructure (ignored by the homogeneous case).
    pub eps: f64,
    /// Fine cells per axis; `None` means `h = H * eps`.
    pub n_fine: Option<usize>,
    /// Coefficient value of the homogeneous case.
    pub kappa: f64,
    pub layers: Layers,
    pub path: CoarsePath,
    pub divergence: DivergenceForm,
    /// Where the source moments of the mixed path are averaged.
    pub source_region: IntegrationRegion,
    pub flags: MacroFlags,
    pub geometry: Geometry,
    pub boundary: BoundaryPolicy,
    /// Reuse cell solutions between blocks with identical local problems.
    pub cache: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            case: CaseSel::Layered,
            m: 10,
            eps: 0.1,
            n_fine: None,
            kappa: 1.0,
            layers: default_layers(4),
            path: CoarsePath::Mixed,
            divergence: DivergenceForm::Weak,
            source_region: IntegrationRegion::Target,
            flags: MacroFlags {
                gradient_source: true,
                ..MacroFlags::default()
            },
            geometry: Geometry::default(),
            boundary: BoundaryPolicy::Extend,
            cache: true,
            out: PathBuf::from("out"),
        }
    }
}

/// Inner widths used when only `l` is given: `l_I = l - 1`, `l_V = l - 2`
/// (both clamped at zero).
pub fn default_layers(l: usize) -> Layers {
    Layers {
        l,
        l_v: l.saturating_sub(2),
        l_i: l.saturating_sub(1),
    }
}

/// Parse `key = value` lines into a map (keys lower-cased).
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1)));
        };
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

/// `eps` accepts either a decimal or a reciprocal written `1/20`.
fn period(key: &str, v: &str) -> Result<f64> {
    match v.split_once('/') {
        Some((a, b)) => Ok(num::<f64>(key, a)? / num::<f64>(key, b)?),
        None => num(key, v),
    }
}

impl ExperimentConfig {
    /// Build from a key map; unknown keys are rejected so typos surface.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        let mut l_v = None;
        let mut l_i = None;
        for (key, v) in map {
            match key.as_str() {
                "case" => c.case = v.parse()?,
                "m" => c.m = num(key, v)?,
                "eps" => c.eps = period(key, v)?,
                "n_fine" => c.n_fine = if v == "auto" { None } else { Some(num(key, v)?) },
                "kappa" => c.kappa = num(key, v)?,
                "l" | "layers" => c.layers.l = num(key, v)?,
                "l_v" => l_v = Some(num(key, v)?),
                "l_i" => l_i = Some(num(key, v)?),
                "path" => c.path = parse_path(v)?,
                "divergence" => c.divergence = v.parse()?,
                "source_region" => c.source_region = v.parse()?,
                "neglect_alpha_v" => c.flags.neglect_alpha_v = boolean(key, v)?,
                "neglect_convection" => c.flags.neglect_convection = boolean(key, v)?,
                "gradient_source" => c.flags.gradient_source = boolean(key, v)?,
                "layer_fraction" => c.geometry.layer_fraction = num(key, v)?,
                "orientation" => {
                    c.geometry.orientation = match v.to_ascii_lowercase().as_str() {
                        "horizontal" => Orientation::Horizontal,
                        "vertical" => Orientation::Vertical,
                        _ => return Err(Error::Config(format!("orientation: '{v}'"))),
                    }
                }
                "inclusion_side" => c.geometry.inclusion_side = num(key, v)?,
                "boundary" => c.boundary = v.parse()?,
                "cache" => c.cache = boolean(key, v)?,
                "out" => c.out = PathBuf::from(v),
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        let d = default_layers(c.layers.l);
        c.layers.l_v = l_v.unwrap_or(d.l_v);
        c.layers.l_i = l_i.unwrap_or(d.l_i);
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_kv(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Fine cells per axis.
    pub fn fine_cells(&self) -> usize {
        self.n_fine.unwrap_or_else(|| match self.case {
            CaseSel::Homogeneous => 10 * self.m,
            _ => (1.0 / (self.eps / self.m as f64)).round() as usize,
        })
    }

    pub fn coarse_h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m < 2 {
            return fail(format!("M = {} must be at least 2", self.m));
        }
        if self.layers.l < 1 {
            return fail("l must be at least 1".into());
        }
        Layers::new(self.layers.l, self.layers.l_v, self.layers.l_i)?;
        if self.path == CoarsePath::Mixed && self.layers.l_v >= self.layers.l {
            return fail(format!(
                "mixed cell problems need l_V < l (got l_V = {}, l = {}): the velocity constraints must leave a \
                 pressure-only ring",
                self.layers.l_v, self.layers.l
            ));
        }
        let n = self.fine_cells();
        if n == 0 || n % self.m != 0 {
            return fail(format!("{n} fine cells per axis do not split into {} blocks", self.m));
        }
        if self.case != CaseSel::Homogeneous {
            if !(self.eps > 0.0 && self.eps <= 1.0) {
                return fail(format!("eps = {} must lie in (0, 1]", self.eps));
            }
            let per = self.eps * n as f64;
            if (per - per.round()).abs() > 1e-9 || per.round() < 8.0 {
                return fail(format!(
                    "h = 1/{n} does not resolve eps = {} with a whole number (>= 8) of cells per period",
                    self.eps
                ));
            }
        } else if !(self.kappa > 0.0) {
            return fail(format!("kappa = {} must be positive", self.kappa));
        }
        Ok(())
    }

    /// Canonical key map; `from_map(to_map())` reproduces the config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("case", self.case.to_string());
        put("m", self.m.to_string());
        put("eps", format!("{:?}", self.eps));
        put("n_fine", self.n_fine.map_or("auto".into(), |n| n.to_string()));
        put("kappa", format!("{:?}", self.kappa));
        put("l", self.layers.l.to_string());
        put("l_v", self.layers.l_v.to_string());
        put("l_i", self.layers.l_i.to_string());
        put("path", path_name(self.path).into());
        put(
            "divergence",
            match self.divergence {
                DivergenceForm::Weak => "weak",
                DivergenceForm::Strong => "strong",
            }
            .into(),
        );
        put("source_region", self.source_region.name().into());
        put("neglect_alpha_v", self.flags.neglect_alpha_v.to_string());
        put("neglect_convection", self.flags.neglect_convection.to_string());
        put("gradient_source", self.flags.gradient_source.to_string());
        put("layer_fraction", format!("{:?}", self.geometry.layer_fraction));
        put(
            "orientation",
            match self.geometry.orientation {
                Orientation::Horizontal => "horizontal",
                Orientation::Vertical => "vertical",
            }
            .into(),
        );
        put("inclusion_side", format!("{:?}", self.geometry.inclusion_side));
        put(
            "boundary",
            match self.boundary {
                BoundaryPolicy::Clip => "clip",
                BoundaryPolicy::Extend => "extend",
            }
            .into(),
        );
        put("cache", self.cache.to_string());
        put("out", self.out.display().to_string());
        m
    }

    /// The canonical `key=value` text, one key per line in sorted order.
    pub fn to_kv_text(&self) -> String {
        self.to_map().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Content hash of the canonical text, in git's object format
    /// (`blob <len>\0<content>`) but with SHA-256. The output directory is
    /// excluded so that moving results does not change the identity of a run.
    pub fn hash(&self) -> String {
        let mut map = self.to_map();
        map.remove("out");
        let text: String = map.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", text.len()).as_bytes());
        h.update(text.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short label used in file names.
    pub fn tag(&self) -> String {
        format!(
            "case{}_M{}_n{}_l{}-{}-{}_{}",
            self.case.number(),
            self.m,
            self.fine_cells(),
            self.layers.l,
            self.layers.l_v,
            self.layers.l_i,
            path_name(self.path)
        )
    }
}
