//! Dataset generation and the on-disk formats.
//!
//! `AFND` v1 layout, all little-endian:
//!
//! ```text
//! "AFND"  u32 version = 1  u64 n  u64 d  f64 coords[n * d]   (row-major)
//! ```
//!
//! CSV input holds one point per line as comma-separated decimals.

use std::io::{Read, Write};
use std::path::Path;

use afn_core::adversary::build_attack_dataset;
use afn_core::rng::{standard_normal_vec, RngStream};
use afn_core::{AfnError, Dataset};

use crate::config::DatasetKind;
use crate::error::{HarnessError, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"AFND";
pub const DATASET_VERSION: u32 = 1;

/// Builds a dataset of the given kind. `n` and `d` are ignored for files.
pub fn gen_dataset(kind: &DatasetKind, n: usize, d: usize, sigma: f64, stream: RngStream) -> Result<Dataset> {
    match kind {
        DatasetKind::Gaussian => {
            let mut rng = stream.rng();
            Ok(Dataset::from_flat(d, standard_normal_vec(n * d, &mut rng))?)
        }
        DatasetKind::Clustered => {
            let mut rng = stream.rng();
            let mut coords = standard_normal_vec(n * d, &mut rng);
            for (i, row) in coords.chunks_exact_mut(d).enumerate() {
                let shift = if i < n / 2 { sigma } else { -sigma };
                row.iter_mut().for_each(|x| *x += shift);
            }
            Ok(Dataset::from_flat(d, coords)?)
        }
        DatasetKind::Attack => Ok(build_attack_dataset(n, d)?),
        DatasetKind::File(path) => load_dataset(path),
    }
}

pub fn write_afnd<W: Write>(p: &Dataset, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| HarnessError::Core(AfnError::Io(e));
    w.write_all(&DATASET_MAGIC).map_err(io)?;
    w.write_all(&DATASET_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(p.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(p.dim() as u64).to_le_bytes()).map_err(io)?;
    for x in p.as_flat() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn format_err(offset: u64, reason: impl Into<String>) -> HarnessError {
    HarnessError::Core(AfnError::Format { offset, reason: reason.into() })
}

/// Parses an `AFND` image. Errors carry the byte offset of the bad field.
pub fn read_afnd(bytes: &[u8]) -> Result<Dataset> {
    let field = |at: usize, len: usize| -> Result<&[u8]> {
        bytes.get(at..at + len).ok_or_else(|| format_err(at as u64, "unexpected end of file"))
    };
    if field(0, 4)? != DATASET_MAGIC {
        return Err(format_err(0, "bad magic, expected \"AFND\""));
    }
    let version = u32::from_le_bytes(field(4, 4)?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(field(8, 8)?.try_into().unwrap());
    let d = u64::from_le_bytes(field(16, 8)?.try_into().unwrap());
    if n == 0 {
        return Err(format_err(8, "n must be at least 1"));
    }
    if d == 0 {
        return Err(format_err(16, "d must be at least 1"));
    }
    let body = 24usize;
    let count = n.checked_mul(d).and_then(|c| usize::try_from(c).ok()).filter(|c| c.checked_mul(8).is_some());
    let Some(count) = count else {
        return Err(format_err(8, format!("n * d = {n} * {d} is too large")));
    };
    let expected = body + count * 8;
    if bytes.len() < expected {
        return Err(format_err(bytes.len() as u64, format!("file truncated: expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(format_err(expected as u64, "trailing bytes after the coordinates"));
    }
    let mut coords = Vec::with_capacity(count);
    for (i, chunk) in bytes[body..].chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(chunk.try_into().unwrap());
        if !x.is_finite() {
            return Err(format_err((body + 8 * i) as u64, "non-finite coordinate"));
        }
        coords.push(x);
    }
    Ok(Dataset::from_flat(d as usize, coords)?)
}

pub fn save_afnd(p: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(HarnessError::file(path))?;
    write_afnd(p, std::io::BufWriter::new(f))
}

/// Parses CSV points; errors carry the byte offset of the offending record.
pub fn read_csv<R: Read>(r: R, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(r);
    let mut coords = Vec::new();
    let mut d = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?;
        let offset = rec.position().map_or(0, |p| p.byte());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match d {
            None => d = Some(rec.len()),
            Some(d) if d != rec.len() => {
                return Err(format_err(offset, format!("expected {d} fields, found {}", rec.len())));
            }
            _ => {}
        }
        for field in rec.iter() {
            let x: f64 = field.parse().map_err(|_| format_err(offset, format!("not a number: {field:?}")))?;
            if !x.is_finite() {
                return Err(format_err(offset, format!("non-finite value {field:?}")));
            }
            coords.push(x);
        }
    }
    let d = d.ok_or_else(|| format_err(0, "no points"))?;
    Ok(Dataset::from_flat(d, coords)?)
}

/// Loads `AFND` (detected by its magic) or CSV.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(HarnessError::file(path))?;
    if bytes.starts_with(&DATASET_MAGIC) {
        read_afnd(&bytes)
    } else {
        read_csv(&bytes[..], path)
    }
}
