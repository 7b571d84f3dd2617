//! Saliency map serialization: `DCLS` raw float grids and CSV.
//!
//! A DCLS file is a 16-byte header (`b"DCLS"`, then width, height and a
//! reserved zero, each a little-endian `u32`) followed by `width * height`
//! little-endian `f32` values in row-major order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::map::{DiffMap, SaliencyMap};

pub const DCLS_MAGIC: [u8; 4] = *b"DCLS";
pub const DCLS_HEADER_LEN: usize = 16;

fn dims_u32(width: usize, height: usize) -> Result<(u32, u32)> {
    let w = u32::try_from(width).map_err(|_| Error::invalid("width exceeds u32"))?;
    let h = u32::try_from(height).map_err(|_| Error::invalid("height exceeds u32"))?;
    Ok((w, h))
}

fn encode(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    let (w, h) = dims_u32(width, height)?;
    let mut out = Vec::with_capacity(DCLS_HEADER_LEN + values.len() * 4);
    out.extend_from_slice(&DCLS_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Encodes a map; values are narrowed to `f32`.
pub fn encode_dcls(m: &SaliencyMap) -> Result<Vec<u8>> {
    encode(m.width(), m.height(), m.values())
}

pub fn encode_dcls_diff(d: &DiffMap) -> Result<Vec<u8>> {
    encode(d.width, d.height, &d.values)
}

/// Decodes into `(width, height, values)`.
pub fn decode_dcls_raw(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < DCLS_HEADER_LEN {
        return Err(Error::Format("DCLS header truncated".into()));
    }
    if bytes[..4] != DCLS_MAGIC {
        return Err(Error::Format("bad DCLS magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let n = w
        .checked_mul(h)
        .ok_or_else(|| Error::Format("DCLS dimensions overflow".into()))?;
    let body = &bytes[DCLS_HEADER_LEN..];
    if body.len() != n * 4 {
        return Err(Error::Format(format!(
            "DCLS body has {} bytes, expected {}",
            body.len(),
            n * 4
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((w, h, values))
}

pub fn decode_dcls(bytes: &[u8]) -> Result<SaliencyMap> {
    let (w, h, v) = decode_dcls_raw(bytes)?;
    SaliencyMap::new(w, h, v.into_iter().map(f64::from).collect())
}

pub fn write_dcls(path: impl AsRef<Path>, m: &SaliencyMap) -> Result<()> {
    fs::write(path, encode_dcls(m)?)?;
    Ok(())
}

pub fn read_dcls(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_dcls(&bytes)
}

/// One row per image row, comma-separated.
pub fn write_csv<W: Write>(mut out: W, width: usize, values: &[f64]) -> Result<()> {
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<SaliencyMap> {
    let mut width = None;
    let mut values = Vec::new();
    let mut height = 0;
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "line {}: {} columns, expected {w}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::Format("empty CSV".into()))?;
    SaliencyMap::new(width, height, values)
}
