//! CSV output. Every file starts with a `schema_version` column; columns
//! ending in `_seconds` (and `speedup`) hold measured wall-clock values and
//! are the only ones allowed to differ between identically seeded runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ExpError, ExpResult};

pub const SCHEMA_VERSION: u32 = 1;

pub fn is_timing_column(name: &str) -> bool {
    name.ends_with("_seconds") || name == "speedup"
}

/// Writes `rows` to `dir/name` with a header row.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> ExpResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| ExpError::io(&path, e))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub schema_version: u32,
    pub experiment: String,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub budget_b: usize,
    /// Inner-solver calls made while training.
    pub labels_used: usize,
    pub optimizer_steps: usize,
    pub ipl: f64,
    pub mc_std_err: f64,
    pub label_seconds: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

/// Across-replication mean with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySummaryRow {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub method: String,
    pub budget_b: usize,
    pub replications: usize,
    pub labels_used: usize,
    pub ipl: f64,
    pub mc_std_err: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeCurveRow {
    pub schema_version: u32,
    pub experiment: String,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub lambda: f64,
    /// Criterion value; empty when the point could not be evaluated.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSummaryRow {
    pub schema_version: u32,
    pub experiment: String,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub lambda_hat: f64,
    pub grid_index: usize,
    pub test_mse: f64,
    pub train_seconds: f64,
    pub curve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub schema_version: u32,
    pub experiment: String,
    pub replication: usize,
    pub seed: u64,
    pub q: f64,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fitted quantile at the design mean.
    pub quantile_at_mean: f64,
    pub true_quantile: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistCurveRow {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub lambda: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSummaryRow {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub method: String,
    pub lambda: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub train_seconds: f64,
    pub curve_seconds: f64,
    /// `grid_points × baseline train time / curve time` (hypernet row only).
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmeRow {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub iteration: usize,
    pub nu_inv_alpha: f64,
    pub lambda: f64,
}

/// Compares two CSV files cell by cell, ignoring timing columns. Returns a
/// description of the first difference.
pub fn diff_ignoring_timing(a: &Path, b: &Path) -> ExpResult<Option<String>> {
    let read = |p: &Path| -> ExpResult<(Vec<String>, Vec<csv::StringRecord>)> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(p)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().collect::<Result<Vec<_>, _>>()?;
        Ok((header, rows))
    };
    let (ha, ra) = read(a)?;
    let (hb, rb) = read(b)?;
    if ha != hb {
        return Ok(Some(format!("headers differ: {ha:?} vs {hb:?}")));
    }
    if ra.len() != rb.len() {
        return Ok(Some(format!(
            "row counts differ: {} vs {}",
            ra.len(),
            rb.len()
        )));
    }
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        for (k, name) in ha.iter().enumerate() {
            if !is_timing_column(name) && x.get(k) != y.get(k) {
                return Ok(Some(format!(
                    "row {i}, column {name}: {:?} vs {:?}",
                    x.get(k),
                    y.get(k)
                )));
            }
        }
    }
    Ok(None)
}
