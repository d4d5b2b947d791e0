//! Dense `f64` matrix files used for frame features and the feature cache.
//!
//! Binary layout (little endian):
//!
//! | bytes | content            |
//! |-------|--------------------|
//! | 4     | magic `LLMX`       |
//! | 4     | version, `u32` = 1 |
//! | 8     | rows, `u64`        |
//! | 8     | cols, `u64`        |
//! | 8·r·c | row-major `f64`    |
//!
//! A CSV matrix is one row per line, comma separated, no header.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use crate::error::{LeakError, Result};

const MAGIC: &[u8; 4] = b"LLMX";
const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

pub fn encode(m: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Array2<f64>, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err("missing LLMX header".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported matrix version {version}"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != rows * cols * 8 {
        return Err(format!(
            "expected {} data bytes for {rows}x{cols}, found {}",
            rows * cols * 8,
            body.len()
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| e.to_string())
}

pub fn write_binary(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, encode(m)).map_err(|e| LeakError::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| LeakError::io(path, e))?;
    decode(&bytes).map_err(|message| LeakError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    })
}

pub fn read_csv(path: &Path) -> Result<Array2<f64>> {
    let file = fs::File::open(path).map_err(|e| LeakError::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LeakError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| LeakError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(format!("expected {c} columns, found {}", row.len())))
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| LeakError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

/// Reads `.csv` as text, anything else as the binary layout.
pub fn read_any(path: &Path) -> Result<Array2<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(path),
        _ => read_binary(path),
    }
}
