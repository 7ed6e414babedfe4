//! Result tables, plot data and the run summary, written atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let k = self.header.iter().position(|h| h == name).expect("known column");
        self.rows.iter().map(|r| r[k]).collect()
    }

    /// Header row, LF line endings, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| number(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest exact form for integers, otherwise 17 significant digits.
pub fn number(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Two-column `x y` data for plotting.
#[derive(Clone, Debug)]
pub struct Plot {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Plot {
    pub fn new(name: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {} {}\n", self.x_label, self.y_label);
        for (x, y) in &self.points {
            let _ = writeln!(out, "{} {}", number(*x), number(*y));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition.
    pub condition: String,
    pub passed: bool,
    /// Reported only; does not affect the exit code.
    pub informational: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("<= {limit:e}"),
            passed: value <= limit,
            informational: false,
        }
    }

    pub fn holds(name: &str, value: f64, condition: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            value,
            condition: condition.into(),
            passed,
            informational: false,
        }
    }

    pub fn informational(mut self) -> Self {
        self.informational = true;
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.informational)
    }
}

/// Writes via a temporary file in the same directory and renames over the target.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Tables and plots first, `summary.json` last.
pub fn write_all(dir: &Path, output: &ExperimentOutput, mut summary: Value) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &output.tables {
        let p = dir.join(format!("{}.csv", t.name));
        write_atomic(&p, &t.to_csv())?;
        files.push(p);
    }
    for pl in &output.plots {
        let p = dir.join(format!("{}.dat", pl.name));
        write_atomic(&p, &pl.to_text())?;
        files.push(p);
    }
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    summary["files"] = names.into();
    let p = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    text.push('\n');
    write_atomic(&p, &text)?;
    files.push(p);
    Ok(files)
}
