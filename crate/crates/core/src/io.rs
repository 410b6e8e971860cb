//! Plain-text numeric matrix files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Parses a matrix from text: one row per line, entries separated by
/// whitespace, commas or tabs. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    path: origin.to_path_buf(),
                    detail: format!("line {}: {t:?}: {e}", lineno + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    detail: format!("line {}: expected {} columns, found {}", lineno + 1, first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            detail: "no numeric rows".into(),
        });
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn format_matrix(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

/// Coordinate-list export `i\tj\tweight` of the nonzero entries.
pub fn format_coo(m: &Array2<f64>) -> String {
    let mut out = String::from("i\tj\tweight\n");
    for ((i, j), &w) in m.indexed_iter() {
        if w != 0.0 {
            let _ = writeln!(out, "{i}\t{j}\t{w:.17e}");
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
