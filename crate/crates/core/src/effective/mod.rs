//! Macroscale coefficients obtained by evaluating the fine bilinear forms on
//! pairs of cell-solution columns and normalizing by the region measure.

pub mod elliptic;
pub mod mixed;
pub mod zero_order;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use elliptic::{assemble_elliptic, EllipticEffective};
pub use mixed::{assemble_mixed, DivergenceForm, MixedEffective};
pub use zero_order::{assemble_zero_order, ZeroOrderEffective};

use crate::error::{Error, Result};

/// Region over which the localized integrals are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationRegion {
    /// The coarse block itself.
    Target,
    /// The block extended by `l_I` layers.
    Integration,
}

impl IntegrationRegion {
    pub fn cells(self, regions: &crate::grid::RegionSet) -> crate::grid::CellRect {
        match self {
            Self::Target => regions.target_cells(),
            Self::Integration => regions.integration_cells(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Target => "target",
            Self::Integration => "integration",
        }
    }
}

impl std::str::FromStr for IntegrationRegion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(Self::Target),
            "integration" => Ok(Self::Integration),
            _ => Err(Error::Config(format!("unknown integration region `{s}` (target | integration)"))),
        }
    }
}

pub(crate) fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Write any serializable set of per-block tensors as pretty JSON.
pub fn save_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}
