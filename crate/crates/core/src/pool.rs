//! The unlabeled pool: candidate points stacked as rows of a dense matrix.

use crate::error::{OedError, Result};
use nalgebra::DMatrix;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

/// Pool of `m` candidate points in `d` dimensions, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMatrix {
    data: DMatrix<f64>,
}

impl PoolMatrix {
    /// Wraps a dense row-major pool. Requires at least one point, one feature
    /// and finite entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(OedError::InvalidInput(
                "pool must have at least one row and one column".into(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (m, _) = data.shape();
            return Err(OedError::InvalidInput(format!(
                "non-finite pool entry at row {}, col {}",
                pos % m,
                pos / m
            )));
        }
        Ok(Self { data })
    }

    pub fn num_points(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> nalgebra::RowDVector<f64> {
        self.data.row(i).into_owned()
    }

    /// Sub-pool restricted to the given rows (design matrix `V_S`).
    pub fn select_rows(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), self.dim(), |i, j| self.data[(indices[i], j)])
    }

    /// Parses a CSV of reals, one point per line. `skip_header` drops line 1.
    pub fn from_csv_reader<R: Read>(reader: R, skip_header: bool) -> Result<Self> {
        let rows = parse_numeric_csv(reader, skip_header)?;
        if rows.is_empty() {
            return Err(OedError::InvalidInput(
                "pool CSV contains no data rows".into(),
            ));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(OedError::Parse {
                    line: i + 1 + skip_header as usize,
                    msg: format!("expected {} fields, found {}", d, r.len()),
                });
            }
        }
        let m = rows.len();
        let data = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
        Self::new(data)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, skip_header: bool) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(BufReader::new(f), skip_header)
    }
}

/// Parses comma-separated reals, reporting 1-based line numbers on failure.
/// Blank lines are ignored.
pub fn parse_numeric_csv<R: Read>(reader: R, skip_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if idx == 0 && skip_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| OedError::Parse {
                line: idx + 1,
                msg: format!("cannot parse '{}' as a real number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(OedError::Parse {
                    line: idx + 1,
                    msg: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}
