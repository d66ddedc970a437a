//! Dense matrix files.
//!
//! Matrices are stored as headerless CSV, row-major, one matrix row per line,
//! comma-separated, with `.` as the decimal mark. Numbers are written in the
//! shortest representation that round-trips to the same `f64`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn write_matrix<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut record = Vec::with_capacity(m.ncols());
    for i in 0..m.nrows() {
        record.clear();
        for j in 0..m.ncols() {
            record.push(format_f64(m[(i, j)]));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {field:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape(format!(
                    "line {} has {} fields, expected {}",
                    line + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(&mut buf, m)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    read_matrix(file)
}

/// Shortest round-trip decimal form: plain notation for moderate magnitudes,
/// scientific notation outside `[1e-5, 1e16)`. Negative zero prints as `0`.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_row_major_without_header() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.0, 2.25, 1e-20, -0.0]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,-0.5,0\n2.25,1e-20,0\n");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = read_matrix("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn bad_number_is_a_parse_error() {
        let err = read_matrix("1,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0).sqrt() / (j as f64 + 3.0) - 0.1);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }
}
