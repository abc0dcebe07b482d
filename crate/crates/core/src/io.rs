//! Text formats shared by the library and the command-line runner.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::symplectic::SkewForm;

/// Parses a dense row-major matrix, one row per line, comma separated.
/// Blank lines and lines starting with `#` are skipped.
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e} in {s:?}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != rows[0].len()) {
        return Err(Error::Parse(format!("row {} has {} entries, expected {}", i + 1, r.len(), rows[0].len())));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Reads a skew form from either CSV or the JSON `{"dim", "upper"}` object.
pub fn form_from_str(text: &str) -> Result<SkewForm<f64>> {
    if text.trim_start().starts_with('{') {
        Ok(serde_json::from_str(text)?)
    } else {
        SkewForm::from_matrix(&matrix_from_csv(text)?)
    }
}

/// Shortest round-trip representation.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

/// `x1,y1,…,xn,yn` plus a trailing column name.
pub fn coord_header(n: usize, last: &str) -> String {
    let mut h = String::new();
    for i in 1..=n {
        let _ = write!(h, "x{i},y{i},");
    }
    h.push_str(last);
    h
}

/// Batch export with header `x1,y1,…,xn,yn,z`.
pub fn elements_to_csv(n: usize, points: &[GroupElement<f64>]) -> String {
    let mut out = coord_header(n, "z");
    out.push('\n');
    for p in points {
        let row: Vec<String> = p.v.iter().chain(std::iter::once(&p.z)).map(|&x| fmt(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `coord,density` table.
pub fn profile_to_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("coord,density\n");
    for (c, d) in rows {
        let _ = writeln!(out, "{},{}", fmt(*c), fmt(*d));
    }
    out
}

/// Pass/fail record used by every deterministic check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckReport {
    /// Relative residual `|lhs − rhs| / |rhs|` (absolute when `rhs = 0`).
    pub fn relative(lhs: f64, rhs: f64, tol: f64) -> Self {
        let residual = if rhs == 0.0 { (lhs - rhs).abs() } else { (lhs - rhs).abs() / rhs.abs() };
        CheckReport { lhs, rhs, residual, tol, pass: residual <= tol }
    }

    pub fn absolute(lhs: f64, rhs: f64, tol: f64) -> Self {
        let residual = (lhs - rhs).abs();
        CheckReport { lhs, rhs, residual, tol, pass: residual <= tol }
    }
}

/// Statistical test record `{statistic, threshold, pass, N, m, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -1.5, 0.0]);
        let s = matrix_to_csv(&m);
        assert_eq!(s, "0,1.5\n-1.5,0\n");
        assert_eq!(matrix_from_csv(&s).unwrap(), m);
        assert!(matrix_from_csv("1,2\n3\n").is_err());
        assert!(matrix_from_csv("1,x\n").is_err());
    }

    #[test]
    fn form_from_either_format() {
        let a = form_from_str("0,2\n-2,0\n").unwrap();
        let b = form_from_str(r#"{"dim": 2, "upper": [2.0]}"#).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shortest_round_trip_formatting() {
        assert_eq!(fmt(0.1), "0.1");
        assert_eq!(fmt(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(coord_header(2, "z"), "x1,y1,x2,y2,z");
    }
}
