//! Matrix Market I/O. Coordinate format for matrices (real, integer or
//! pattern; general or symmetric), array format for vectors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::laplacian::{DirectedLaplacian, Tolerances};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn parse_num<T: Scalar>(tok: Option<&str>, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("bad number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, "non-finite value"));
    }
    Ok(T::of(v))
}

fn parse_idx(tok: Option<&str>, line: usize, dim: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing index"))?;
    let i: usize = tok.parse().map_err(|_| parse_err(line, format!("bad index {tok:?}")))?;
    if i == 0 || i > dim {
        return Err(parse_err(line, format!("index {i} outside 1..={dim}")));
    }
    Ok(i - 1)
}

pub fn parse_matrix<T: Scalar>(text: &str) -> Result<SparseMatrix<T>> {
    let header = text.lines().next().ok_or_else(|| parse_err(1, "empty input"))?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "expected a %%MatrixMarket matrix header"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format {}", words[2])));
    }
    let field = match words[3].as_str() {
        "real" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(parse_err(1, format!("unsupported field {other}"))),
    };
    let sym = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry {other}"))),
    };

    let mut lines = data_lines(text);
    let (ln, size) = lines.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(ln, format!("bad size {t:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(ln, "size line needs rows, cols, nnz"));
    };
    if sym == Symmetry::Symmetric && rows != cols {
        return Err(parse_err(ln, "symmetric matrix must be square"));
    }

    let mut trip = Vec::with_capacity(if sym == Symmetry::Symmetric { 2 * nnz } else { nnz });
    let mut seen = 0;
    for (ln, l) in lines {
        let mut tok = l.split_whitespace();
        let i = parse_idx(tok.next(), ln, rows)?;
        let j = parse_idx(tok.next(), ln, cols)?;
        let v: T = match field {
            Field::Pattern => T::one(),
            Field::Real | Field::Integer => parse_num(tok.next(), ln)?,
        };
        trip.push((i, j, v));
        if sym == Symmetry::Symmetric && i != j {
            trip.push((j, i, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(0, format!("header promises {nnz} entries, found {seen}")));
    }
    SparseMatrix::from_triplets(rows, cols, trip)
}

/// Coordinate real general, entries sorted by `(row, col)`.
pub fn format_matrix<T: Scalar>(a: &SparseMatrix<T>) -> String {
    let mut out = String::with_capacity(32 * (a.nnz() + 2));
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v.as_f64());
    }
    out
}

pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<SparseMatrix<T>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix<T: Scalar>(path: impl AsRef<Path>, a: &SparseMatrix<T>) -> Result<()> {
    fs::write(path, format_matrix(a))?;
    Ok(())
}

/// Reads a Laplacian and validates column sums; Eulerianness is recorded as a
/// flag, not enforced.
pub fn read_laplacian<T: Scalar>(path: impl AsRef<Path>, tol: &Tolerances) -> Result<DirectedLaplacian<T>> {
    DirectedLaplacian::from_matrix(read_matrix(path)?, tol)
}

pub fn write_laplacian<T: Scalar>(path: impl AsRef<Path>, l: &DirectedLaplacian<T>) -> Result<()> {
    write_matrix(path, l.matrix())
}

/// Accepts an array-format or single-column coordinate Matrix Market vector,
/// or plain whitespace-separated floats.
pub fn parse_vector<T: Scalar>(text: &str) -> Result<Vec<T>> {
    let first = text.lines().next().unwrap_or("").trim().to_ascii_lowercase();
    if !first.starts_with("%%matrixmarket") {
        let mut out = Vec::new();
        for (ln, l) in data_lines(text) {
            for tok in l.split_whitespace() {
                out.push(parse_num(Some(tok), ln)?);
            }
        }
        return Ok(out);
    }
    if first.split_whitespace().nth(2) == Some("coordinate") {
        let m = parse_matrix::<T>(text)?;
        if m.n_cols() != 1 {
            return Err(parse_err(2, format!("vector must have one column, found {}", m.n_cols())));
        }
        let mut out = vec![T::zero(); m.n_rows()];
        for (i, _, v) in m.triplets() {
            out[i] = v;
        }
        return Ok(out);
    }
    let mut lines = data_lines(text);
    let (ln, size) = lines.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(ln, format!("bad size {t:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 || dims[1] != 1 {
        return Err(parse_err(ln, "array vector needs size line `n 1`"));
    }
    let out: Vec<T> = lines.map(|(ln, l)| parse_num(Some(l), ln)).collect::<Result<_>>()?;
    if out.len() != dims[0] {
        return Err(parse_err(0, format!("expected {} values, found {}", dims[0], out.len())));
    }
    Ok(out)
}

pub fn format_vector<T: Scalar>(x: &[T]) -> String {
    let mut out = String::with_capacity(24 * (x.len() + 2));
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} 1", x.len());
    for v in x {
        let _ = writeln!(out, "{:e}", v.as_f64());
    }
    out
}

pub fn read_vector<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn write_vector<T: Scalar>(path: impl AsRef<Path>, x: &[T]) -> Result<()> {
    fs::write(path, format_vector(x))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_sorted() {
        let a = SparseMatrix::from_triplets(3, 3, [(2, 0, -1.5), (0, 0, 2.0), (0, 2, 0.25)]).unwrap();
        let s = format_matrix(&a);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "3 3 3");
        assert_eq!(lines[2], "1 1 2e0");
        assert_eq!(lines[3], "1 3 2.5e-1");
        let b: SparseMatrix<f64> = parse_matrix(&s).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
    }

    #[test]
    fn symmetric_and_duplicates() {
        let s = "%%MatrixMarket matrix coordinate integer symmetric\n% c\n2 2 3\n1 1 2\n2 1 -1\n2 1 -1\n";
        let a: SparseMatrix<f64> = parse_matrix(s).unwrap();
        assert_eq!(a.get(0, 1), -2.0);
        assert_eq!(a.get(1, 0), -2.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_matrix::<f64>("hello").is_err());
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(parse_matrix::<f64>(short).is_err());
        let oob = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(parse_matrix::<f64>(oob), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn vector_formats() {
        let x = vec![1.0, -0.5, 3e-9];
        assert_eq!(parse_vector::<f64>(&format_vector(&x)).unwrap(), x);
        assert_eq!(parse_vector::<f64>("1\n-0.5\n3e-9\n").unwrap(), x);
        let coo = "%%MatrixMarket matrix coordinate real general\n3 1 2\n1 1 1\n3 1 2\n";
        assert_eq!(parse_vector::<f64>(coo).unwrap(), vec![1.0, 0.0, 2.0]);
    }
}
