//! Matrix and report CSV files: comma separated, LF line endings, no header
//! for matrices, empty cells for unobserved entries.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use dlm_core::{DenseMatrix, Observations, ObservedMatrix};

use crate::error::{HarnessError, Result};

/// Float formatting used in every CSV written by the harness (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a matrix; any empty cell makes the result [`Observations::Masked`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Observations> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_matrix_csv(file)
}

pub fn parse_matrix_csv<R: Read>(reader: R) -> Result<Observations> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut cols = None;
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        match cols {
            None => cols = Some(record.len()),
            Some(n) if n != record.len() => {
                return Err(HarnessError::Csv {
                    row,
                    col: record.len().min(n) + 1,
                    msg: format!("expected {n} cells, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| HarnessError::Csv {
                row,
                col: c + 1,
                msg: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(HarnessError::Csv { row, col: c + 1, msg: format!("non-finite value {cell:?}") });
            }
            values.push(v);
            mask.push(true);
        }
    }
    let cols = cols.filter(|c| *c > 0).ok_or(HarnessError::Csv { row: 1, col: 1, msg: "empty matrix".into() })?;
    let rows = values.len() / cols;
    let dense = DenseMatrix::from_row_major(rows, cols, values)?;
    if mask.iter().all(|m| *m) {
        Ok(Observations::Full(dense))
    } else {
        Ok(Observations::Masked(ObservedMatrix::new(dense, mask)?))
    }
}

pub fn write_matrix_csv(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_cells(path, m.rows(), m.cols(), |r, c| fmt_f64(m.get(r, c)))
}

/// Writes observed entries and leaves unobserved cells empty.
pub fn write_observed_csv(m: &ObservedMatrix, path: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = m.shape();
    write_cells(
        path,
        rows,
        cols,
        |r, c| {
            if m.is_observed(r, c) {
                fmt_f64(m.values().get(r, c))
            } else {
                String::new()
            }
        },
    )
}

fn write_cells(path: impl AsRef<Path>, rows: usize, cols: usize, cell: impl Fn(usize, usize) -> String) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path.as_ref())?);
    for r in 0..rows {
        w.write_record((0..cols).map(|c| cell(r, c)))?;
    }
    w.flush().map_err(|e| HarnessError::io(path.as_ref(), e))?;
    Ok(())
}

/// A report table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_writer(create(path.as_ref())?);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| HarnessError::io(path.as_ref(), e))?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<impl Write> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}
