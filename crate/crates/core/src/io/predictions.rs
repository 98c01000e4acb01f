//! Predictions CSV: header `label,logit_0,…,logit_{K-1}`, one sample per row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CalibError, Result};
use crate::prediction::PredictionSet;

pub fn parse_predictions(path: impl AsRef<Path>) -> Result<PredictionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CalibError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_predictions_str(&text, path, name)
}

/// Parses predictions CSV text; `path` is only used in error messages.
///
/// Cells are plain decimal numbers, so no CSV quoting is recognized. Blank
/// lines are skipped but still counted for line numbers.
pub fn parse_predictions_str(text: &str, path: &Path, name: impl Into<String>) -> Result<PredictionSet> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
    let header = lines.next().map(|(_, l)| l.trim_start_matches('\u{feff}'));
    let class_count = check_header(header, path)?;

    let mut logits = Vec::new();
    let mut labels = Vec::new();
    for (line, content) in lines {
        if content.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = content.split(',').map(str::trim).collect();
        if cells.len() != class_count + 1 {
            return Err(malformed(
                path,
                line,
                format!("expected {} columns, found {}", class_count + 1, cells.len()),
            ));
        }
        let label = match cells[0].parse::<i64>() {
            Ok(v) if v >= 0 && (v as usize) < class_count => v as usize,
            Ok(_) => {
                return Err(CalibError::LabelOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    label: cells[0].to_string(),
                    class_count,
                })
            }
            Err(_) => {
                return Err(CalibError::NonNumeric {
                    path: path.to_path_buf(),
                    line,
                    column: 1,
                    value: cells[0].to_string(),
                })
            }
        };
        labels.push(label);
        for (j, cell) in cells.iter().enumerate().skip(1) {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CalibError::NonNumeric {
                    path: path.to_path_buf(),
                    line,
                    column: j + 1,
                    value: cell.to_string(),
                })?;
            logits.push(value);
        }
    }
    if labels.is_empty() {
        return Err(malformed(path, 2, "no sample rows".into()));
    }
    PredictionSet::from_flat(logits, class_count, labels, name)
}

fn check_header(header: Option<&str>, path: &Path) -> Result<usize> {
    let bad = |message: String| CalibError::BadHeader {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    let header = header
        .filter(|h| !h.trim().is_empty())
        .ok_or_else(|| bad("file is empty".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns[0] != "label" {
        return Err(bad(format!("first column must be `label`, found {:?}", columns[0])));
    }
    let class_count = columns.len() - 1;
    if class_count < 2 {
        return Err(bad(format!("need at least 2 logit columns, found {class_count}")));
    }
    for (k, col) in columns.iter().enumerate().skip(1) {
        if *col != format!("logit_{}", k - 1) {
            return Err(bad(format!(
                "column {} must be `logit_{}`, found {col:?}",
                k + 1,
                k - 1
            )));
        }
    }
    Ok(class_count)
}

fn malformed(path: &Path, line: u64, message: String) -> CalibError {
    CalibError::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Renders a set as predictions CSV. Numbers use the shortest representation
/// that parses back to the identical `f64`.
pub fn format_predictions(set: &PredictionSet) -> String {
    let mut out = String::from("label");
    for k in 0..set.class_count() {
        write!(out, ",logit_{k}").unwrap();
    }
    out.push('\n');
    for (row, y) in set.rows().zip(set.labels()) {
        write!(out, "{y}").unwrap();
        for v in row {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_predictions(set: &PredictionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_predictions(set)).map_err(|e| CalibError::io(path, e))
}
