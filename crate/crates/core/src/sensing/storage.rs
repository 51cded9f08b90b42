//! Matrix persistence.
//!
//! Generated matrices are stored as their recipe `(origin, rows, cols)` and
//! regenerated on load, so files stay a few hundred bytes regardless of size.
//! Explicit matrices carry their entries. A dense CSV dump is available for
//! debugging.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{build_matrix, Origin, SensingMatrix};
use crate::error::{Error, Result};

pub const MATRIX_FORMAT: &str = "cqcd-sensing-matrix";
pub const MATRIX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MatrixRecord {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<f64>>,
}

fn storage_err(e: impl std::fmt::Display) -> Error {
    Error::Storage(e.to_string())
}

fn contains_explicit(origin: &Origin) -> bool {
    match origin {
        Origin::Explicit => true,
        Origin::Generated { .. } => false,
        Origin::Orthonormalized { source } => contains_explicit(source),
    }
}

pub fn write_matrix<W: Write>(phi: &SensingMatrix, writer: W) -> Result<()> {
    let entries = contains_explicit(phi.origin()).then(|| {
        // row-major
        phi.entries().transpose().as_slice().to_vec()
    });
    let record = MatrixRecord {
        format: MATRIX_FORMAT.to_string(),
        version: MATRIX_FORMAT_VERSION,
        rows: phi.rows(),
        cols: phi.cols(),
        origin: phi.origin().clone(),
        entries,
    };
    serde_json::to_writer_pretty(writer, &record).map_err(storage_err)
}

fn regenerate(origin: &Origin, rows: usize, cols: usize) -> Result<SensingMatrix> {
    match origin {
        Origin::Generated { construction, seed } => build_matrix(*construction, rows, cols, *seed),
        Origin::Orthonormalized { source } => regenerate(source, rows, cols)?.orthonormalize(),
        Origin::Explicit => Err(storage_err("explicit matrix without entries")),
    }
}

pub fn read_matrix<R: Read>(reader: R) -> Result<SensingMatrix> {
    let record: MatrixRecord = serde_json::from_reader(reader).map_err(storage_err)?;
    if record.format != MATRIX_FORMAT {
        return Err(storage_err(format!("unexpected format tag `{}`", record.format)));
    }
    if record.version != MATRIX_FORMAT_VERSION {
        return Err(storage_err(format!("unsupported version {}", record.version)));
    }
    match record.entries {
        // anything derived from an explicit matrix is stored verbatim
        Some(values) => {
            if values.len() != record.rows * record.cols {
                return Err(Error::DimensionMismatch {
                    context: "stored matrix entries",
                    expected: record.rows * record.cols,
                    found: values.len(),
                });
            }
            let entries = DMatrix::from_row_slice(record.rows, record.cols, &values);
            SensingMatrix::with_origin(entries, record.origin)
        }
        None => regenerate(&record.origin, record.rows, record.cols),
    }
}

pub fn save_matrix(phi: &SensingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(storage_err)?;
    write_matrix(phi, std::io::BufWriter::new(file))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<SensingMatrix> {
    let file = std::fs::File::open(path).map_err(storage_err)?;
    read_matrix(std::io::BufReader::new(file))
}

/// Dense dump, one matrix row per CSV line.
pub fn export_csv<W: Write>(phi: &SensingMatrix, writer: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in phi.entries().row_iter() {
        out.write_record(row.iter().map(|v| format!("{v:e}")))
            .map_err(storage_err)?;
    }
    out.flush().map_err(storage_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::Construction;

    #[test]
    fn generated_matrix_regenerates_bitwise() {
        for c in Construction::ALL {
            let (m, n) = if c == Construction::Identity { (6, 6) } else { (4, 9) };
            let phi = build_matrix(c, m, n, 77).unwrap();
            let mut buf = Vec::new();
            write_matrix(&phi, &mut buf).unwrap();
            assert!(buf.len() < 512, "recipe file should be tiny");
            let back = read_matrix(buf.as_slice()).unwrap();
            assert_eq!(back, phi);
        }
    }

    #[test]
    fn explicit_and_orthonormalized_round_trip() {
        let phi = SensingMatrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, -1.0, 3.0]]).unwrap();
        let orth = phi.orthonormalize().unwrap();
        for m in [&phi, &orth] {
            let mut buf = Vec::new();
            write_matrix(m, &mut buf).unwrap();
            assert_eq!(&read_matrix(buf.as_slice()).unwrap(), m);
        }
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"format":"other","version":1,"rows":1,"cols":1,"origin":{"kind":"explicit"}}"#;
        assert!(matches!(read_matrix(text.as_bytes()), Err(Error::Storage(_))));
    }

    #[test]
    fn csv_dump_has_one_line_per_row() {
        let phi = build_matrix(Construction::GaussianToeplitz, 3, 5, 1).unwrap();
        let mut buf = Vec::new();
        export_csv(&phi, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split(',').count() == 5));
    }
}
