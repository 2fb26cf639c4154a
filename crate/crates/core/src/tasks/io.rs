// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use crate::error::{Error, Result};

/// Reads one numeric column (by header name) from a CSV file, preserving row order.
pub fn load_csv_series(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::Empty(format!("{} contains no data", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| {
        Error::Format(format!(
            "{}: no column '{column}' (have: {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = record
            .get(idx)
            .ok_or_else(|| Error::Format(format!("{} line {line}: missing column '{column}'", path.display())))?;
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::Format(format!("{} line {line}: '{cell}' is not a number", path.display())))?;
        if !v.is_finite() {
            return Err(Error::Format(format!("{} line {line}: non-finite value '{cell}'", path.display())));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Empty(format!("{} has a header but no rows", path.display())));
    }
    Ok(values)
}

/// Writes `t,<column>` rows with shortest round-trip formatting.
pub fn write_csv_series(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["t", column]).map_err(wrap)?;
    for (t, v) in values.iter().enumerate() {
        w.write_record([t.to_string(), format!("{v:?}")]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
