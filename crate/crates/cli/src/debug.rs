//! Matrix input for `sinkhorn-debug`.

use serde::Serialize;
use thiserror::Error;

use pgs_core::otn::{sinkhorn, SinkhornConfig};
use pgs_core::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixParseError {
    #[error("line {line}, column {column}: {message}")]
    At { line: usize, column: usize, message: String },
    #[error("matrix is {rows}x{cols}; sinkhorn needs a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
}

/// JSON (an array of rows) when the text starts with `[`, CSV otherwise.
/// CSV lines may be blank or start with `#`; columns count bytes from 1.
pub fn parse_matrix(text: &str) -> Result<Matrix, MatrixParseError> {
    let rows = if text.trim_start().starts_with('[') { parse_json(text)? } else { parse_csv(text)? };
    let n = rows.len();
    if n == 0 {
        return Err(MatrixParseError::Empty);
    }
    let cols = rows[0].len();
    if cols != n {
        return Err(MatrixParseError::NotSquare { rows: n, cols });
    }
    Ok(Matrix::from_vec(n, n, rows.concat()).expect("square rows"))
}

fn parse_json(text: &str) -> Result<Vec<Vec<f64>>, MatrixParseError> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| MatrixParseError::At {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    if let Some(first) = rows.first() {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != first.len()) {
            return Err(MatrixParseError::At {
                line: 1,
                column: 1,
                message: format!("row {} has {} entries, row 1 has {}", i + 1, r.len(), first.len()),
            });
        }
    }
    Ok(rows)
}

fn strip_position(msg: &str) -> String {
    msg.rsplit_once(" at line ").map_or(msg, |(m, _)| m).to_string()
}

fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>, MatrixParseError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        let mut column = 1;
        for field in line.split(',') {
            let lead = field.len() - field.trim_start().len();
            let v: f64 = field.trim().parse().map_err(|_| MatrixParseError::At {
                line: i + 1,
                column: column + lead,
                message: format!("invalid number {:?}", field.trim()),
            })?;
            row.push(v);
            column += field.len() + 1;
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MatrixParseError::At {
                    line: i + 1,
                    column: 1,
                    message: format!("row has {} entries, first row has {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct DebugOutput {
    pub n: usize,
    pub matrix: Vec<Vec<f64>>,
    pub iterations: usize,
    pub deviation: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

pub fn run(m: &Matrix, cfg: &SinkhornConfig) -> pgs_core::Result<DebugOutput> {
    let out = sinkhorn(m, cfg)?;
    let v = &out.matrix.values;
    Ok(DebugOutput {
        n: v.rows(),
        matrix: v.iter_rows().map(|r| r.to_vec()).collect(),
        iterations: out.iterations,
        deviation: out.deviation,
        converged: out.converged,
        trace: out.trace,
    })
}
