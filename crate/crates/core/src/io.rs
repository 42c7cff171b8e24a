//! CSV and JSON file helpers shared by every artifact writer.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical and rewriting the same data yields the same bytes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Header plus rows of already-formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses one column as floats.
    pub fn floats(&self, name: &str, path: &Path) -> Result<Vec<f64>> {
        let c = self.column(name).ok_or_else(|| Error::Format {
            path: path.to_owned(),
            reason: format!("missing column {name}"),
        })?;
        self.rows.iter().map(|r| parse_f64(&r[c], path)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        Ok(Self { header, rows })
    }
}

/// Formats a float so that parsing it back returns the identical value.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format {
        path: path.to_owned(),
        reason: format!("not a number: {s:?}"),
    })
}

/// Writes a numeric matrix with a leading `id` column.
pub fn write_matrix(path: &Path, columns: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut t = Table::new(std::iter::once("id".to_owned()).chain(columns.iter().cloned()));
    for (i, r) in rows.enumerate() {
        let mut cells = Vec::with_capacity(r.len() + 1);
        cells.push(i.to_string());
        cells.extend(r.into_iter().map(fmt));
        t.push(cells);
    }
    t.write(path)
}

/// Reads a matrix written by [`write_matrix`]; returns (column names, rows).
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let t = Table::read(path)?;
    if t.header.first().map(String::as_str) != Some("id") {
        return Err(Error::Format {
            path: path.to_owned(),
            reason: "first column must be id".into(),
        });
    }
    let rows = t
        .rows
        .iter()
        .map(|r| r[1..].iter().map(|c| parse_f64(c, path)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok((t.header[1..].to_vec(), rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_owned(),
            reason: format!("{other:?}"),
        },
    }
}
