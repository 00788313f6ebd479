//! Headerless CSV reading and writing for designs and response vectors.
//!
//! Rows are samples, columns are features; the response is one value per
//! line. Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces the matrix bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{HedeError, Result};

fn io_err(path: &Path, source: std::io::Error) -> HedeError {
    HedeError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: String) -> HedeError {
    HedeError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    }
}

pub fn write_matrix_csv(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut out = String::with_capacity(x.len() * 20);
    for row in x.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .enumerate()
            .map(|(j, tok)| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, i + 1, format!("field {}: bad float '{tok}'", j + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("row has {} fields, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "file contains no data rows".into()));
    }
    let p = rows[0].len();
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, p), flat)
        .map_err(|e| parse_err(path, 0, format!("shape error: {e}")))
}

pub fn write_vector(path: &Path, y: &Array1<f64>) -> Result<()> {
    let mut out = String::with_capacity(y.len() * 20);
    for v in y {
        let _ = writeln!(out, "{v}");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_vector(path: &Path) -> Result<Array1<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        vals.push(
            line.parse::<f64>()
                .map_err(|_| parse_err(path, i + 1, format!("bad float '{line}'")))?,
        );
    }
    if vals.is_empty() {
        return Err(parse_err(path, 1, "file contains no values".into()));
    }
    Ok(Array1::from_vec(vals))
}
