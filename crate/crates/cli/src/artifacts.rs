//! Artifact writers: CSV with full 17-significant-digit decimals and JSON
//! with sorted keys, both rejecting non-finite values so nothing silent
//! leaves the process.

use std::fs;
use std::path::Path;

use crate::commands::CliError;

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a CSV file (comma separator, header row, LF endings).
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let mut first = true;
        for v in row {
            if !v.is_finite() {
                return Err(CliError::NonFinite(path.display().to_string()));
            }
            if !first {
                out.push(',');
            }
            out.push_str(&format_f64(v));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn check_finite(value: &serde_json::Value, path: &Path) -> Result<(), CliError> {
    match value {
        serde_json::Value::Number(n) => {
            if n.as_f64().map(|x| !x.is_finite()).unwrap_or(false) {
                return Err(CliError::NonFinite(path.display().to_string()));
            }
        }
        serde_json::Value::Array(a) => {
            for v in a {
                check_finite(v, path)?;
            }
        }
        serde_json::Value::Object(o) => {
            for v in o.values() {
                check_finite(v, path)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Write a JSON artifact. serde_json's default map is ordered, so identical
/// values produce byte-identical files.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    check_finite(value, path)?;
    let mut text = serde_json::to_string_pretty(value).expect("json serialization");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}
