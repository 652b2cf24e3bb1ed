//! The `ZSLB` binary matrix format.
//!
//! Layout: the four magic bytes `ZSLB`, little-endian `u32` rows, little-endian
//! `u32` cols, then `rows·cols` little-endian `f64` values in row-major order.
//! Label vectors are stored as `1×N` matrices of integral values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"ZSLB";
const HEADER_LEN: usize = 12;

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8], origin: &Path) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(origin, "missing ZSLB header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * cols * 8 {
        return Err(Error::format(
            origin,
            format!(
                "header declares {rows}x{cols} but payload holds {} bytes",
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    if m.rows() > u32::MAX as usize || m.cols() > u32::MAX as usize {
        return Err(Error::Size(format!("{}x{} exceeds the u32 header", m.rows(), m.cols())));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_matrix(m))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let data = labels.iter().map(|&l| l as f64).collect();
    write_matrix(path, &Matrix::from_vec_unchecked(1, labels.len(), data))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let m = read_matrix(path)?;
    if m.rows() != 1 && m.as_slice().len() > 0 {
        return Err(Error::format(
            path,
            format!("label file must be 1xN, got {}x{}", m.rows(), m.cols()),
        ));
    }
    m.as_slice()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::format(path, format!("label {v} is not a non-negative integer")))
            }
        })
        .collect()
}

/// Reads a headerless comma-separated file into a matrix (one CSV row per
/// matrix row).
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::format(
                path,
                format!("row {} has {} fields", line + 1, record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: cannot parse {field:?}", line + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, cols.unwrap_or(0), data).map_err(|e| Error::format(path, e.to_string()))
}

/// Converts a headerless CSV file into a `ZSLB` matrix file.
pub fn csv_to_zslb(csv_path: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<Matrix> {
    let m = read_csv_matrix(csv_path)?;
    write_matrix(out, &m)?;
    Ok(m)
}
