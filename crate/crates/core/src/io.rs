//! Matrix file formats.
//!
//! Dense matrices are headerless CSV. Sparse responses may also be given as
//! coordinate text: an `N J NNZ` header followed by one 1-indexed
//! `row col value` triple per line. Lines starting with `%` are comments.
//! Values are written in shortest round-trip form so reading a written file
//! gives back the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, WgomError};
use crate::model::ResponseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    DenseCsv,
    Coordinate,
}

/// Shortest decimal that parses back to exactly `v`.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| WgomError::Parse(format!("line {line}: `{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(WgomError::Parse(format!("line {line}: non-finite value `{token}`")));
    }
    Ok(v)
}

pub fn read_dense_csv(path: &Path) -> Result<DMatrix<f64>> {
    read_dense_csv_from(File::open(path)?)
}

pub fn read_dense_csv_from<R: std::io::Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'%'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut ncols = 0;
    let mut nrows = 0;
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if nrows == 0 {
            ncols = record.len();
        }
        for token in record.iter() {
            values.push(parse_value(token, line)?);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(WgomError::Parse("empty matrix file".into()));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

pub fn write_dense_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dense_csv_to(&mut out, m)?;
    out.flush()?;
    Ok(())
}

pub fn write_dense_csv_to<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads coordinate text. Repeated entries are summed.
pub fn read_coordinate(path: &Path) -> Result<DMatrix<f64>> {
    read_coordinate_from(BufReader::new(File::open(path)?))
}

pub fn read_coordinate_from<R: BufRead>(reader: R) -> Result<DMatrix<f64>> {
    let mut matrix: Option<DMatrix<f64>> = None;
    let mut expected = 0usize;
    let mut seen = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(WgomError::Parse(format!(
                "line {lineno}: expected 3 fields, found {}",
                fields.len()
            )));
        }
        let parse_index = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| WgomError::Parse(format!("line {lineno}: `{s}` is not an index")))
        };
        match matrix.as_mut() {
            None => {
                let (n, j) = (parse_index(fields[0])?, parse_index(fields[1])?);
                expected = parse_index(fields[2])?;
                if n == 0 || j == 0 {
                    return Err(WgomError::Parse(format!("line {lineno}: empty dimensions {n}x{j}")));
                }
                matrix = Some(DMatrix::zeros(n, j));
            }
            Some(m) => {
                let (i, j) = (parse_index(fields[0])?, parse_index(fields[1])?);
                if i == 0 || j == 0 || i > m.nrows() || j > m.ncols() {
                    return Err(WgomError::Parse(format!(
                        "line {lineno}: entry ({i}, {j}) outside a {}x{} matrix",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m[(i - 1, j - 1)] += parse_value(fields[2], lineno)?;
                seen += 1;
            }
        }
    }
    let matrix = matrix.ok_or_else(|| WgomError::Parse("missing `N J NNZ` header".into()))?;
    if seen != expected {
        return Err(WgomError::Parse(format!(
            "header declares {expected} entries but {seen} were found"
        )));
    }
    Ok(matrix)
}

/// Writes the nonzero entries of `m` in coordinate form.
pub fn write_coordinate(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let nnz = m.iter().filter(|&&v| v != 0.0).count();
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), nnz)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{} {} {}", i + 1, j + 1, format_value(v))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `.csv` is dense; anything else is sniffed from the first data line
/// (commas mean dense CSV, otherwise coordinate text).
pub fn detect_format(path: &Path) -> Result<MatrixFormat> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Ok(MatrixFormat::DenseCsv);
    }
    let reader = BufReader::new(File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        return Ok(if text.contains(',') { MatrixFormat::DenseCsv } else { MatrixFormat::Coordinate });
    }
    Err(WgomError::Parse(format!("{} has no data lines", path.display())))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match detect_format(path)? {
        MatrixFormat::DenseCsv => read_dense_csv(path),
        MatrixFormat::Coordinate => read_coordinate(path),
    }
}

pub fn read_responses(path: &Path) -> Result<ResponseMatrix> {
    ResponseMatrix::new(read_matrix(path)?)
}

/// A response matrix with its all-zero rows and columns removed.
#[derive(Debug, Clone)]
pub struct Pruned {
    pub responses: ResponseMatrix,
    /// Original (zero-based) indices of the kept subjects.
    pub kept_subjects: Vec<usize>,
    /// Original (zero-based) indices of the kept items.
    pub kept_items: Vec<usize>,
}

/// Drops subjects with no response and items with no response, both judged
/// on the original matrix in a single pass. Removing rows can leave new empty
/// columns; those are kept.
pub fn prune_empty(responses: &ResponseMatrix) -> Result<Pruned> {
    let r = responses.values();
    let kept_subjects: Vec<usize> =
        (0..r.nrows()).filter(|&i| r.row(i).iter().any(|&v| v != 0.0)).collect();
    let kept_items: Vec<usize> =
        (0..r.ncols()).filter(|&j| r.column(j).iter().any(|&v| v != 0.0)).collect();
    if kept_subjects.is_empty() || kept_items.is_empty() {
        return Err(WgomError::InvalidInput("pruning leaves an empty matrix".into()));
    }
    let values = r.select_rows(kept_subjects.iter()).select_columns(kept_items.iter());
    Ok(Pruned { responses: ResponseMatrix::new(values)?, kept_subjects, kept_items })
}

/// One 1-based index per line.
pub fn write_index_file(path: &Path, indices: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &i in indices {
        writeln!(out, "{}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_index_file`], returning zero-based indices.
pub fn read_index_file(path: &Path) -> Result<Vec<usize>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let i: usize = text
            .parse()
            .ok()
            .filter(|&i| i > 0)
            .ok_or_else(|| WgomError::Parse(format!("line {}: bad index `{text}`", idx + 1)))?;
        out.push(i - 1);
    }
    Ok(out)
}
