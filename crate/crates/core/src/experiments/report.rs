//! CSV rows and JSON run manifests.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{CaseOutcome, CellStats, Timings};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "case,H,eps,l,e2_1,e2_2,e2_1_sq,e2_2_sq,runtime_s";

/// One line of the results table. Single-continuum runs leave the second
/// continuum's columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub case: u32,
    pub h: f64,
    pub eps: f64,
    pub l: usize,
    pub e2: Vec<f64>,
    pub e2_sq: Vec<f64>,
    pub runtime_s: f64,
}

impl CsvRow {
    pub fn from_outcome(o: &CaseOutcome) -> Self {
        Self {
            case: o.config.case.number(),
            h: o.config.coarse_h(),
            eps: o.config.eps,
            l: o.config.layers.l,
            e2: o.report.e2.clone(),
            e2_sq: o.report.e2_sq.clone(),
            runtime_s: o.timings.total,
        }
    }

    /// The row without the runtime column. Identical configurations give
    /// identical text here.
    pub fn deterministic_part(&self) -> String {
        let cell = |v: &[f64], k: usize| v.get(k).map_or(String::new(), |x| format!("{x:?}"));
        format!(
            "{},{:?},{:?},{},{},{},{},{}",
            self.case,
            self.h,
            self.eps,
            self.l,
            cell(&self.e2, 0),
            cell(&self.e2, 1),
            cell(&self.e2_sq, 0),
            cell(&self.e2_sq, 1)
        )
    }

    pub fn to_line(&self) -> String {
        format!("{},{:.3}", self.deterministic_part(), self.runtime_s)
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("CSV row needs 9 fields, got {}: '{line}'", f.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'"))) };
        let opt = |a: &str, b: &str| -> Result<Vec<f64>> {
            [a, b].iter().filter(|s| !s.is_empty()).map(|s| num(s)).collect()
        };
        Ok(Self {
            case: f[0].parse().map_err(|_| Error::Parse(format!("bad case '{}'", f[0])))?,
            h: num(f[1])?,
            eps: num(f[2])?,
            l: f[3].parse().map_err(|_| Error::Parse(format!("bad l '{}'", f[3])))?,
            e2: opt(f[4], f[5])?,
            e2_sq: opt(f[6], f[7])?,
            runtime_s: num(f[8])?,
        })
    }
}

/// Append `row` to `path`, writing the header first if the file is new or empty.
pub fn append_csv(path: &Path, row: &CsvRow) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{}", row.to_line())?;
    Ok(())
}

/// Rows of a results file (header checked, blank lines skipped).
pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(CsvRow::parse).collect()
}

/// What a run was, and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Canonical configuration as key/value strings.
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub parallel: bool,
    pub threads: Option<usize>,
    pub outputs: Vec<PathBuf>,
    pub row: Option<CsvRow>,
    pub cells: Option<CellStats>,
    pub timings: Option<Timings>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, threads: Option<usize>) -> Self {
        Self {
            tool: "mchom".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.to_map(),
            config_hash: config.hash(),
            parallel: super::parallel::is_parallel(),
            threads,
            outputs: Vec::new(),
            row: None,
            cells: None,
            timings: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_outcome(mut self, o: &CaseOutcome) -> Self {
        self.row = Some(CsvRow::from_outcome(o));
        self.cells = Some(o.cell_stats);
        self.timings = Some(o.timings);
        self.warnings.extend(o.report.warnings(o.config.m));
        self
    }

    /// Rebuild the configuration the run used.
    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_map(&self.config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_round_trip() {
        let row = CsvRow {
            case: 1,
            h: 0.1,
            eps: 0.05,
            l: 2,
            e2: vec![0.25, 0.0625],
            e2_sq: vec![0.0625, 0.00390625],
            runtime_s: 1.5,
        };
        assert_eq!(CsvRow::parse(&row.to_line()).unwrap(), row);
        let single = CsvRow {
            e2: vec![0.01],
            e2_sq: vec![0.0001],
            ..row
        };
        let line = single.to_line();
        assert!(line.contains("0.01,,0.0001,,"), "{line}");
        assert_eq!(CsvRow::parse(&line).unwrap(), single);
    }

    #[test]
    fn csv_header_written_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let row = CsvRow::parse("2,0.1,0.1,1,0.5,0.25,0.25,0.0625,0.000").unwrap();
        append_csv(&p, &row).unwrap();
        append_csv(&p, &row).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.matches(CSV_HEADER).count(), 1);
        assert_eq!(read_csv(&p).unwrap(), vec![row.clone(), row]);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let m = RunManifest::new("run-case", &cfg, Some(2));
        let p = dir.path().join("manifest.json");
        m.save(&p).unwrap();
        let back = RunManifest::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config().unwrap(), cfg);
        assert_eq!(back.config_hash, cfg.hash());
    }
}
