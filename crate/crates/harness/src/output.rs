//! CSV and JSON emission.

use std::path::Path;

use serde::Serialize;
use siadmm::{Record, RNG_VERSION};

use crate::curve::{csv_err, finish, ErrorCurve};
use crate::{HarnessError, Result};

/// Column order of a run CSV.
pub const RUN_COLUMNS: [&str; 8] = ["k", "samples_x", "samples_y", "samples_total", "err_u_G", "err_x", "err_y", "wall_ms"];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per recorded step; quantities a run does not report are left empty.
pub fn record_to_csv(rec: &Record) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_COLUMNS).map_err(csv_err)?;
    for r in &rec.rows {
        w.write_record([
            r.k.to_string(),
            r.samples_x.to_string(),
            r.samples_y.to_string(),
            r.samples_total().to_string(),
            opt(r.err_u_g),
            opt(r.err_x),
            opt(r.err_y),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// A free-form result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        finish(w)
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub summary: serde_json::Map<String, serde_json::Value>,
    /// `(file stem, record)`
    pub runs: Vec<(String, Record)>,
    pub curves: Vec<ErrorCurve>,
    pub tables: Vec<Table>,
    /// `Some(false)` when the experiment has a verdict and it failed.
    pub passed: Option<bool>,
}

impl ExperimentReport {
    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.summary.insert(key.into(), v);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn curve(&self, algorithm: &str) -> Option<&ErrorCurve> {
        self.curves.iter().find(|c| c.algorithm == algorithm)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Writes `summary.json`, `runs/*.csv`, `curves/*.csv` and `tables/*.csv` under `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    mkdir(dir)?;
    let mut summary = report.summary.clone();
    summary.insert("rng_version".into(), RNG_VERSION.into());
    if let Some(p) = report.passed {
        summary.insert("passed".into(), p.into());
    }
    let text = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Check(e.to_string()))?;
    write(&dir.join("summary.json"), &(text + "\n"))?;
    if !report.runs.is_empty() {
        mkdir(&dir.join("runs"))?;
        for (stem, rec) in &report.runs {
            write(&dir.join("runs").join(format!("{stem}.csv")), &record_to_csv(rec)?)?;
        }
    }
    if !report.curves.is_empty() {
        mkdir(&dir.join("curves"))?;
        for c in &report.curves {
            let stem = format!("{}_{}", c.algorithm, c.metric.name());
            write(&dir.join("curves").join(format!("{stem}.csv")), &c.to_csv()?)?;
        }
    }
    if !report.tables.is_empty() {
        mkdir(&dir.join("tables"))?;
        for t in &report.tables {
            write(&dir.join("tables").join(format!("{}.csv", t.name)), &t.to_csv()?)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use siadmm::RunRow;

    #[test]
    fn missing_values_are_empty_fields() {
        let rec = Record {
            algorithm: "x".into(),
            seed: 1,
            config_hash: 0,
            rows: vec![RunRow {
                k: 3,
                samples_x: 10,
                samples_y: 0,
                wall_ms: 1.5,
                err_u_g: None,
                err_x: Some(0.25),
                err_y: None,
                iterate: None,
            }],
            wall_ms: 1.5,
        };
        let text = record_to_csv(&rec).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,samples_x,samples_y,samples_total,err_u_G,err_x,err_y,wall_ms");
        assert_eq!(lines.next().unwrap(), "3,10,0,10,,0.25,,1.5");
    }
}
