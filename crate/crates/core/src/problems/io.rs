//! Plain-text matrix formats.
//!
//! CSV: one sample per row, comma separated, no header; blank lines and lines
//! starting with `#` are ignored. Matrix files: whitespace-separated rows of a
//! single matrix, same comment rules.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn parse_rows(text: &str, path: &Path, split: impl Fn(&str) -> Vec<&str>) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = split(line)
            .into_iter()
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{}:{}: bad number {tok:?}", path.display(), lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "{}:{}: expected {} columns, found {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_rows(&text, path, |l| l.split(',').collect())
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_rows(&text, path, |l| l.split_whitespace().collect())
}

/// Reads every regular file in `dir`, in file-name order, as a square matrix.
pub fn read_matrix_dir(dir: impl AsRef<Path>) -> Result<Vec<DMatrix<f64>>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Parse(format!("{}: no matrix files", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let m = read_matrix_file(p)?;
            if !m.is_square() {
                return Err(Error::Parse(format!(
                    "{}: matrix is {}x{}, expected square",
                    p.display(),
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m)
        })
        .collect()
}
