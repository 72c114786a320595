//! Tab-separated export tables.
//!
//! Every derived artifact is a TSV with a header row: trivially diffable,
//! loadable from R/pandas, and byte-stable across reruns. `NA` marks values
//! a metric could not produce (degenerate input, inapplicable lexicon).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Sentinel for values a metric declined to produce.
pub const NA: &str = "NA";

/// An in-memory TSV table with a fixed column set.
#[derive(Debug, Clone)]
pub struct TsvTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TsvTable {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> TsvTable {
        TsvTable {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width {} != column count {}",
            row.len(),
            self.columns.len()
        );
        for cell in &row {
            assert!(
                !cell.contains('\t') && !cell.contains('\n'),
                "TSV cell contains a separator: {cell:?}"
            );
        }
        self.rows.push(row);
    }

    /// Index of a named column.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("no column '{name}'")))
    }

    pub fn render(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(body: &str) -> Result<TsvTable> {
        let mut lines = body.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty TSV".to_string()))?;
        let columns: Vec<String> = header.split('\t').map(str::to_string).collect();
        let mut table = TsvTable {
            columns,
            rows: Vec::new(),
        };
        for (idx, line) in lines.enumerate() {
            let row: Vec<String> = line.split('\t').map(str::to_string).collect();
            if row.len() != table.columns.len() {
                return Err(Error::Data(format!(
                    "TSV row {} has {} cells, expected {}",
                    idx + 2,
                    row.len(),
                    table.columns.len()
                )));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<TsvTable> {
        let body = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        TsvTable::parse(&body)
    }

    /// Writes the table only when the bytes differ; returns whether it wrote.
    pub fn write_if_changed(&self, path: &Path) -> Result<bool> {
        write_if_changed(path, &self.render())
    }
}

/// Fixed-precision float formatting shared by every export, so reruns are
/// byte-stable.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.6}")
}

/// `NA` for absent values.
pub fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => fmt_f64(v),
        None => NA.to_string(),
    }
}

/// Writes `content` to `path` unless the file already holds exactly those
/// bytes, creating parent directories as needed. Returns whether it wrote,
/// which keeps reruns of every stage from touching unchanged artifacts.
pub fn write_if_changed(path: &Path, content: &str) -> Result<bool> {
    if let Ok(existing) = fs::read_to_string(path) {
        if existing == content {
            return Ok(false);
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(true)
}
