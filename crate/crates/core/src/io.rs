//! Delimited files for monthly series and wide panels.
//!
//! A series file has the header `date,return`; a wide file has `date`
//! followed by one column per asset or portfolio. Empty cells and `NaN`
//! mean missing. Floats are written with Rust's shortest round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::portfolio::{FactorSeries, Frequency};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Some(f64::NAN);
    }
    s.parse().ok()
}

/// A date column plus named value columns.
#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// `columns[k][t]`.
    pub columns: Vec<Vec<f64>>,
}

pub fn write_wide(path: &Path, table: &WideTable) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["date".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (t, d) in table.dates.iter().enumerate() {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(table.columns.iter().map(|c| format_value(c[t])));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_wide(path: &Path) -> Result<WideTable, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.get(0).map(str::trim) != Some("date") {
        return Err(format_err(path, "first column must be `date`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let d = NaiveDate::parse_from_str(rec.get(0).unwrap_or("").trim(), "%Y-%m-%d")
            .map_err(|e| format_err(path, format!("row {}: bad date: {e}", line + 2)))?;
        dates.push(d);
        for (k, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(k + 1).unwrap_or("");
            let v = parse_value(cell).ok_or_else(|| format_err(path, format!("row {}: bad number `{cell}`", line + 2)))?;
            col.push(v);
        }
    }
    Ok(WideTable { dates, names, columns })
}

pub fn write_series(path: &Path, series: &FactorSeries) -> Result<(), IoError> {
    write_wide(
        path,
        &WideTable {
            dates: series.dates.clone(),
            names: vec!["return".into()],
            columns: vec![series.values.clone()],
        },
    )
}

pub fn read_series(path: &Path, frequency: Frequency) -> Result<FactorSeries, IoError> {
    let t = read_wide(path)?;
    if t.columns.len() != 1 {
        return Err(format_err(path, "a series file has exactly one value column"));
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let values = t.columns.into_iter().next().unwrap_or_default();
    Ok(FactorSeries::new(name, frequency, t.dates, values))
}

/// `*.csv` files in a directory, sorted by name.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    out.sort();
    Ok(out)
}

/// Every series file in `dir`, named by file stem, in name order.
pub fn read_series_dir(dir: &Path, frequency: Frequency) -> Result<Vec<FactorSeries>, IoError> {
    csv_files(dir)?.iter().map(|p| read_series(p, frequency)).collect()
}
