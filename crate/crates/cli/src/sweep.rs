//! Cartesian-product parameter sweeps over a base run configuration.
//!
//! ```json
//! {
//!   "base": { "schema_version": 1, "seed": 0, ... },
//!   "axes": { "objective.kappa": [0.1, 1.0], "seed": [1, 2, 3] },
//!   "output_dir": "sweeps/kappa",
//!   "cap": 10000
//! }
//! ```
//!
//! Axis keys are dotted paths into the base document. Axes are taken in
//! sorted key order, and each cell's directory is named
//! `key=value__key=value`; a sweep with no axes has the single cell `base`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::config::{resolve_output_dir, RunConfig};
use crate::error::CliError;
use crate::formats::{format_real, Summary};
use crate::run::run_into;

pub const DEFAULT_CAP: usize = 10_000;
pub const INDEX_FILE: &str = "index.csv";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: Value,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    pub values: Vec<Value>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: Result<Summary, String>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema(format!("{}: {}", e.path(), e.inner())))
    }

    /// Number of cells, or `None` on overflow.
    pub fn cell_count(&self) -> Option<usize> {
        self.axes.values().try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
    }

    /// Expand and schema-check every cell. Nothing runs here.
    pub fn cells(&self) -> Result<Vec<Cell>, CliError> {
        if let Some((key, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(CliError::Schema(format!("axes.{key}: needs at least one value")));
        }
        match self.cell_count() {
            Some(n) if n <= self.cap => {}
            _ => {
                return Err(CliError::Schema(format!(
                    "sweep has {} cells, above the cap of {}",
                    self.cell_count().map_or("too many".to_string(), |n| n.to_string()),
                    self.cap
                )))
            }
        }
        let keys: Vec<&String> = self.axes.keys().collect();
        let mut cells = Vec::new();
        let mut counters = vec![0usize; keys.len()];
        loop {
            let values: Vec<Value> = keys
                .iter()
                .zip(&counters)
                .map(|(k, &i)| self.axes[*k][i].clone())
                .collect();
            let mut doc = self.base.clone();
            for (key, value) in keys.iter().zip(&values) {
                set_path(&mut doc, key, value.clone())?;
            }
            let name = if keys.is_empty() {
                "base".to_string()
            } else {
                keys.iter()
                    .zip(&values)
                    .map(|(k, v)| format!("{k}={}", label(v)))
                    .collect::<Vec<_>>()
                    .join("__")
            };
            let config = RunConfig::from_value(&doc).map_err(|e| match e {
                CliError::Schema(msg) => CliError::Schema(format!("cell {name}: {msg}")),
                other => other,
            })?;
            cells.push(Cell { name, values, config });

            // odometer over the axes, last key fastest
            let mut k = keys.len();
            loop {
                if k == 0 {
                    let mut seen = std::collections::BTreeSet::new();
                    if let Some(dup) = cells.iter().find(|c| !seen.insert(c.name.as_str())) {
                        return Err(CliError::Schema(format!(
                            "two cells share the directory name {}",
                            dup.name
                        )));
                    }
                    return Ok(cells);
                }
                k -= 1;
                counters[k] += 1;
                if counters[k] < self.axes[keys[k]].len() {
                    break;
                }
                counters[k] = 0;
            }
        }
    }
}

/// Directory-safe rendering of an axis value.
fn label(v: &Value) -> String {
    let raw = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._+-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::Schema(format!("axes.{path}: `{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Err(CliError::Schema("axes: empty path".into()))
}

/// Run every cell, at most `jobs` at a time (0 lets the pool decide).
pub fn run_cells(cells: Vec<Cell>, root: &Path, jobs: usize) -> Vec<CellOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let mut outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .into_par_iter()
            .map(|cell| {
                let result = run_into(&cell.config, &root.join(&cell.name)).map_err(|e| e.to_string());
                CellOutcome { cell, result }
            })
            .collect()
    });
    outcomes.sort_by(|a, b| a.cell.name.cmp(&b.cell.name));
    outcomes
}

/// Write `index.csv`, one row per cell in name order.
pub fn write_index(path: &Path, keys: &[String], outcomes: &[CellOutcome]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["cell".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(
        [
            "status",
            "periods",
            "mean_regret",
            "mean_delta",
            "final_belief_rmse",
            "error",
        ]
        .map(str::to_string),
    );
    w.write_record(&header).map_err(io)?;
    for o in outcomes {
        let mut row = vec![o.cell.name.clone()];
        row.extend(o.cell.values.iter().map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }));
        match &o.result {
            Ok(s) => row.extend([
                "ok".to_string(),
                s.periods.to_string(),
                format_real(s.mean_regret),
                format_real(s.mean_delta),
                format_real(s.final_belief_rmse),
                String::new(),
            ]),
            Err(e) => row.extend([
                "failed".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ]),
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(CliError::io(path))
}

/// `agent sweep`: returns the sweep root and the per-cell outcomes. Errors
/// with [`CliError::CellsFailed`] after writing the index if any cell failed.
pub fn cmd_sweep(spec_path: &Path, jobs: usize) -> Result<PathBuf, CliError> {
    let spec = SweepSpec::load(spec_path)?;
    let cells = spec.cells()?;
    let root = resolve_output_dir(spec.output_dir.as_deref());
    fs::create_dir_all(&root).map_err(CliError::io(&root))?;
    let total = cells.len();
    let outcomes = run_cells(cells, &root, jobs);
    let keys: Vec<String> = spec.axes.keys().cloned().collect();
    write_index(&root.join(INDEX_FILE), &keys, &outcomes)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    if failed > 0 {
        return Err(CliError::CellsFailed { failed, total });
    }
    Ok(root)
}
