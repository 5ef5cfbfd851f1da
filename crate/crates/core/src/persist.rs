//! The `AFNI` index file: a little-endian, sectioned dump of a
//! [`RobustIndex`] that reloads bit-exactly against the same dataset.
//!
//! ```text
//! header   "AFNI"  u32 version = 1
//! params   f64 c, eps, delta, t
//!          u64 N, k, m
//!          f64 const_N, const_k, const_m
//!          u64 c_N, outlier_factor
//! index    u8 shortcut   u64 master_seed   u64 n   u64 d
//!          [32] sha256 of the dataset's coordinates
//! stats    f64 bw   f64 ct[d]   u8 has_diameter   f64 diameter   f64 R   f64 c
//! bases    k times:
//!            f64 matrix[N * d]            row-major
//!            N times: u64 len, then len times (u32 id, f64 value)
//! ```
//!
//! The candidate set `P^` is not stored; it is recomputed from the lists.

use std::io::{Read, Write};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::base::{BaseIndex, ProjectionList, ProjectionMatrix};
use crate::dataset::{Dataset, DatasetStats};
use crate::error::{AfnError, Result};
use crate::params::Params;
use crate::robust::RobustIndex;
use crate::vector::Point;

pub const INDEX_MAGIC: [u8; 4] = *b"AFNI";
pub const INDEX_VERSION: u32 = 1;

/// SHA-256 over the little-endian bytes of every coordinate.
pub fn dataset_digest(p: &Dataset) -> [u8; 32] {
    let mut h = Sha256::new();
    for x in p.as_flat() {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

struct Out<W> {
    inner: W,
}

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        Ok(self.inner.write_all(b)?)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
}

pub fn write_index<W: Write>(idx: &RobustIndex, w: W) -> Result<()> {
    let mut o = Out { inner: w };
    o.bytes(&INDEX_MAGIC)?;
    o.u32(INDEX_VERSION)?;

    let p = idx.params();
    for v in [p.c, p.eps, p.delta, p.t] {
        o.f64(v)?;
    }
    for v in [p.n_proj, p.k, p.m] {
        o.u64(v as u64)?;
    }
    for v in [p.const_n, p.const_k, p.const_m] {
        o.f64(v)?;
    }
    o.u64(p.c_n as u64)?;
    o.u64(p.outlier_factor as u64)?;

    let data = idx.data();
    o.u8(idx.shortcut() as u8)?;
    o.u64(idx.master_seed())?;
    o.u64(data.len() as u64)?;
    o.u64(data.dim() as u64)?;
    o.bytes(&dataset_digest(data))?;

    let s = idx.stats();
    o.f64(s.bw)?;
    for &x in s.ct.as_slice() {
        o.f64(x)?;
    }
    o.u8(s.diameter.is_some() as u8)?;
    o.f64(s.diameter.unwrap_or(0.0))?;
    o.f64(s.radius)?;
    o.f64(s.c)?;

    for base in idx.bases() {
        for &x in base.matrix().as_flat() {
            o.f64(x)?;
        }
        for list in base.lists() {
            o.u64(list.len() as u64)?;
            for &(v, id) in list.entries() {
                o.u32(id)?;
                o.f64(v)?;
            }
        }
    }
    Ok(o.inner.flush()?)
}

struct In<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> In<R> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(AfnError::Format { offset: self.offset, reason: reason.into() })
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => self.fail("unexpected end of file"),
            Err(e) => Err(e.into()),
        }
    }
    fn array<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.fill(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.offset;
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| AfnError::Format { offset: at, reason: format!("{what} = {v} too large") })
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn finite(&mut self, what: &str) -> Result<f64> {
        let at = self.offset;
        let v = self.f64()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AfnError::Format { offset: at, reason: format!("{what} is not finite") })
        }
    }
    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => {
                self.offset -= 1;
                self.fail(format!("{what} flag must be 0 or 1, got {v}"))
            }
        }
    }
}

/// Reads an index written by [`write_index`]. `data` must be the dataset the
/// index was built on; its size and digest are checked.
pub fn read_index<R: Read>(r: R, data: Arc<Dataset>) -> Result<RobustIndex> {
    let mut i = In { inner: r, offset: 0 };
    if i.array::<4>()? != INDEX_MAGIC {
        i.offset = 0;
        return i.fail("bad magic, expected \"AFNI\"");
    }
    let version = i.u32()?;
    if version != INDEX_VERSION {
        i.offset -= 4;
        return i.fail(format!("unsupported version {version}"));
    }

    let params_at = i.offset;
    let params = Params {
        c: i.f64()?,
        eps: i.f64()?,
        delta: i.f64()?,
        t: i.f64()?,
        n_proj: i.usize("N")?,
        k: i.usize("k")?,
        m: i.usize("m")?,
        const_n: i.f64()?,
        const_k: i.f64()?,
        const_m: i.f64()?,
        c_n: i.usize("c_N")?,
        outlier_factor: i.usize("outlier factor")?,
    };
    if let Err(e) = params.validate() {
        return Err(AfnError::Format { offset: params_at, reason: e.to_string() });
    }

    let shortcut = i.flag("shortcut")?;
    let master_seed = i.u64()?;
    let n_at = i.offset;
    let n = i.usize("n")?;
    let d = i.usize("d")?;
    if n != data.len() || d != data.dim() {
        i.offset = n_at;
        return i.fail(format!("index is for n={n}, d={d} but the dataset has n={}, d={}", data.len(), data.dim()));
    }
    if i.array::<32>()? != dataset_digest(&data) {
        i.offset -= 32;
        return i.fail("dataset digest does not match");
    }

    let bw = i.finite("bw")?;
    let mut ct = Vec::with_capacity(d);
    for _ in 0..d {
        ct.push(i.finite("ct")?);
    }
    let has_diameter = i.flag("diameter")?;
    let diameter = i.finite("diameter")?;
    let stats = DatasetStats {
        bw,
        ct: Point::new(ct)?,
        diameter: has_diameter.then_some(diameter),
        radius: i.finite("R")?,
        c: i.finite("c")?,
    };

    let cap = params.candidates_per_base();
    let mut bases = Vec::with_capacity(params.k);
    for _ in 0..params.k {
        let mut rows = Vec::with_capacity(params.n_proj * d);
        for _ in 0..params.n_proj * d {
            rows.push(i.finite("matrix entry")?);
        }
        let matrix = ProjectionMatrix::from_flat(d, rows)?;
        let mut lists = Vec::with_capacity(params.n_proj);
        for _ in 0..params.n_proj {
            let len_at = i.offset;
            let len = i.usize("list length")?;
            if len != cap.min(n) {
                i.offset = len_at;
                return i.fail(format!("list length {len}, expected {}", cap.min(n)));
            }
            let list_at = i.offset;
            let mut entries = Vec::with_capacity(len);
            for _ in 0..len {
                let id_at = i.offset;
                let id = i.u32()?;
                if id as usize >= n {
                    i.offset = id_at;
                    return i.fail(format!("point id {id} out of range"));
                }
                entries.push((i.finite("list value")?, id));
            }
            let list = ProjectionList::from_entries(entries)
                .map_err(|e| AfnError::Format { offset: list_at, reason: e.to_string() })?;
            lists.push(list);
        }
        bases.push(BaseIndex::from_parts(matrix, lists, cap));
    }
    let mut probe = [0u8; 1];
    if i.inner.read(&mut probe)? != 0 {
        return i.fail("trailing bytes after the last base");
    }
    Ok(RobustIndex::assemble(data, params, stats, bases, master_seed, shortcut))
}

pub fn save_index(idx: &RobustIndex, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_index(idx, std::io::BufWriter::new(f))
}

pub fn load_index(path: &std::path::Path, data: Arc<Dataset>) -> Result<RobustIndex> {
    let f = std::fs::File::open(path)?;
    read_index(std::io::BufReader::new(f), data)
}
