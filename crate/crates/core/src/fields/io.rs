//! Binary field dumps and CSV export.
//!
//! Dump layout (little-endian): magic `FYF1`, `u32 n`, `u32 N`, `u32 kind`,
//! then row-major samples. Kind 0 is one `f64` per point; kind 1 is an
//! `n×n` Hermitian matrix per point, row-major `(re, im)` pairs.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use super::{HermitianField, ScalarField, TorusGrid};
use crate::error::{FyError, Result};

const MAGIC: &[u8; 4] = b"FYF1";
const KIND_SCALAR: u32 = 0;
const KIND_HERMITIAN: u32 = 1;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| FyError::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = match dir {
        Some(d) => d.join(format!(".{}.tmp", name.to_string_lossy())),
        None => Path::new(&format!(".{}.tmp", name.to_string_lossy())).to_path_buf(),
    };
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn header(grid: TorusGrid, kind: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out
}

pub fn encode_scalar(f: &ScalarField) -> Vec<u8> {
    let mut out = header(f.grid(), KIND_SCALAR);
    out.reserve(8 * f.values().len());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_hermitian(h: &HermitianField) -> Vec<u8> {
    let grid = h.grid();
    let n = grid.dim();
    let mut out = header(grid, KIND_HERMITIAN);
    out.reserve(16 * n * n * grid.len());
    for idx in 0..grid.len() {
        for z in h.row_major_at(idx) {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn parse_header(bytes: &[u8]) -> Result<(TorusGrid, u32, &[u8])> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(FyError::Format("missing FYF1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let grid = TorusGrid::new(word(4) as usize, word(8) as usize)
        .map_err(|e| FyError::Format(format!("bad grid in header: {e}")))?;
    Ok((grid, word(12), &bytes[16..]))
}

fn f64s(body: &[u8]) -> impl Iterator<Item = f64> + '_ {
    body.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
}

pub fn decode_scalar(bytes: &[u8]) -> Result<ScalarField> {
    let (grid, kind, body) = parse_header(bytes)?;
    if kind != KIND_SCALAR {
        return Err(FyError::Format(format!("expected scalar dump, found kind {kind}")));
    }
    if body.len() != 8 * grid.len() {
        return Err(FyError::Format(format!(
            "scalar dump body has {} bytes, expected {}",
            body.len(),
            8 * grid.len()
        )));
    }
    ScalarField::new(grid, f64s(body).collect())
}

pub fn decode_hermitian(bytes: &[u8]) -> Result<HermitianField> {
    let (grid, kind, body) = parse_header(bytes)?;
    if kind != KIND_HERMITIAN {
        return Err(FyError::Format(format!("expected Hermitian dump, found kind {kind}")));
    }
    let n = grid.dim();
    if body.len() != 16 * n * n * grid.len() {
        return Err(FyError::Format("Hermitian dump body has the wrong size".into()));
    }
    let vals: Vec<f64> = f64s(body).collect();
    let entries = (0..n * n)
        .map(|e| {
            (0..grid.len())
                .map(|i| {
                    let at = 2 * (i * n * n + e);
                    Complex64::new(vals[at], vals[at + 1])
                })
                .collect()
        })
        .collect();
    HermitianField::from_entries(grid, entries)
}

pub fn save_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    write_atomic(path, &encode_scalar(f))
}

pub fn load_scalar(path: &Path) -> Result<ScalarField> {
    decode_scalar(&fs::read(path)?)
}

pub fn save_hermitian(path: &Path, h: &HermitianField) -> Result<()> {
    write_atomic(path, &encode_hermitian(h))
}

pub fn load_hermitian(path: &Path) -> Result<HermitianField> {
    decode_hermitian(&fs::read(path)?)
}

/// CSV with columns `x1 … x2n, value`, one row per grid point.
pub fn scalar_csv(f: &ScalarField) -> String {
    let grid = f.grid();
    let mut s = String::new();
    let cols: Vec<String> = (1..=grid.axes()).map(|a| format!("x{a}")).collect();
    s.push_str(&cols.join(","));
    s.push_str(",value\n");
    for (idx, v) in f.values().iter().enumerate() {
        for x in grid.coordinates(idx) {
            s.push_str(&format!("{x:.17e},"));
        }
        s.push_str(&format!("{v:.17e}\n"));
    }
    s
}

pub fn save_scalar_csv(path: &Path, f: &ScalarField) -> Result<()> {
    write_atomic(path, scalar_csv(f).as_bytes())
}
