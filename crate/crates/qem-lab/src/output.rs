//! CSV tables and the JSON run manifest.
//!
//! Floats are printed with 17 significant digits (`{:.16e}`), which
//! round-trips every f64 exactly, so a table is byte-identical across runs
//! and worker counts whenever the computed values are.

use crate::config::ExperimentConfig;
use anyhow::Context as _;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One CSV value.
#[derive(Clone, Debug)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

/// Exact decimal form of an f64 for the CSV files.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory table with a fixed header.
#[derive(Clone, Debug)]
pub struct Table {
    /// File stem, e.g. `bloch_x_rmse` becomes `bloch_x_rmse.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width mismatch in {}", self.name);
        self.rows.push(row);
    }

    /// Renders the table; the exact bytes written to disk.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                match cell {
                    Cell::Int(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Cell::Float(v) => out.push_str(&fmt_f64(*v)),
                    Cell::Text(v) => {
                        assert!(
                            !v.contains([',', '\n', '"']),
                            "text cells must not need quoting"
                        );
                        out.push_str(v);
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Machine-readable record of one run: everything needed to replay it.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    /// Elementary gates per QAOA stage, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gates_per_stage: Option<usize>,
    /// Transversal noise layers per QAOA stage, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers_per_stage: Option<usize>,
    /// Brute-force optimum of the QAOA objective, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_optimum: Option<f64>,
    pub tables: Vec<TableInfo>,
    pub wall_seconds: f64,
    pub versions: Versions,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableInfo {
    pub name: String,
    pub rows: usize,
    pub file: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub qem_lab: String,
    pub qem_core: String,
}

impl Versions {
    pub fn current() -> Versions {
        Versions {
            qem_lab: env!("CARGO_PKG_VERSION").to_string(),
            // Workspace crates share one version.
            qem_core: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

impl Manifest {
    pub fn write_to(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&path, json)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
