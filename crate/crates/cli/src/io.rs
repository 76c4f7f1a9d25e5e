//! Comma-separated matrix files: one row per line, optional header line,
//! values written with 17 significant digits so they re-read exactly.

use std::fs;
use std::path::Path;

use rankpen::Matrix;

use crate::failure::{Failure, Outcome};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_matrix(text: &str, header: bool, origin: &str) -> Outcome<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Failure::input(format!(
                "{origin}:{}: expected {expected_len} columns, found {len}",
                pos.as_ref().map_or(0, |p| p.line())
            )),
            _ => Failure::input(format!("{origin}: {e}")),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Failure::input(format!("{origin}:{line}:{}: non-finite value '{field}'", col + 1))),
                Err(_) => Err(Failure::input(format!(
                    "{origin}:{line}:{}: cannot parse '{field}' as a number",
                    col + 1
                ))),
            })
            .collect::<Outcome<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::input(format!("{origin}: no data rows")));
    }
    let ncols = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path, header: bool) -> Outcome<Matrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    parse_matrix(&text, header, &path.display().to_string())
}

/// Reads a single row or single column as a vector.
pub fn read_vector(path: &Path) -> Outcome<Vec<f64>> {
    let m = read_matrix(path, false)?;
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(Failure::input(format!(
            "{}: expected a single row or column, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.iter().copied().collect())
}

pub fn render_matrix(m: &Matrix) -> String {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for i in 0..m.nrows() {
        writer
            .write_record((0..m.ncols()).map(|j| format_value(m[(i, j)])))
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("ascii output")
}
