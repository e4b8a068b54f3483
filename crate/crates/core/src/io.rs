//! Matrix files: CSV with a header row, or raw little-endian `f64` with a
//! JSON sidecar describing the shape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SingError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySidecar {
    pub rows: usize,
    pub cols: usize,
    /// Always `"row-major"`.
    pub layout: String,
    /// Always `"f64-le"`.
    pub dtype: String,
}

/// Writes a matrix as CSV; the header names columns `v1..vp`.
pub fn write_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_csv_with_header(path, m, &(1..=m.ncols()).map(|j| format!("v{j}")).collect::<Vec<_>>())
}

pub fn write_csv_with_header(path: &Path, m: &DMatrix<f64>, header: &[String]) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(SingError::DimensionMismatch("header length differs from column count".into()));
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    let mut buf = Vec::with_capacity(m.ncols());
    for r in m.row_iter() {
        buf.clear();
        buf.extend(r.iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV. A first row that does not parse as numbers is taken
/// as the header.
pub fn read_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(SingError::Parse(format!("{}: line {}: {e}", path.display(), line + 1))),
        };
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(SingError::Parse(format!(
                    "{}: line {} has {} fields, expected {c}",
                    path.display(),
                    line + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| SingError::Parse(format!("{}: no numeric rows", path.display())))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_binary(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in m.row_iter() {
        for v in r.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let side = BinarySidecar { rows: m.nrows(), cols: m.ncols(), layout: "row-major".into(), dtype: "f64-le".into() };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<DMatrix<f64>> {
    let side: BinarySidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if side.layout != "row-major" || side.dtype != "f64-le" {
        return Err(SingError::Parse(format!("unsupported layout {} / dtype {}", side.layout, side.dtype)));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let expected = side.rows * side.cols * 8;
    if bytes.len() != expected {
        return Err(SingError::Parse(format!("{}: {} bytes, expected {expected}", path.display(), bytes.len())));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_row_slice(side.rows, side.cols, &data))
}

/// Reads `.bin` files through their sidecar and everything else as CSV.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_binary(path),
        _ => read_csv(path),
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => write_binary(path, m),
        _ => write_csv(path, m),
    }
}

/// One value per line with a header.
pub fn write_vector_csv(path: &Path, name: &str, v: &[f64]) -> Result<()> {
    let m = DMatrix::from_column_slice(v.len(), 1, v);
    write_csv_with_header(path, &m, &[name.to_string()])
}
