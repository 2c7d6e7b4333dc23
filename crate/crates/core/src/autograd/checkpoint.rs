//! Versioned binary container mapping names to tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes   "XVCK"
//! version  u32       1
//! count    u32       number of entries
//! entry*   name_len u32, name (UTF-8), ndim u32, dims u64 * ndim,
//!          values f64 * product(dims), row-major
//! ```

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::parse(self.what, format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::parse(self.what, "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? != magic {
            return Err(Error::parse(self.what, "bad magic"));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::parse(self.what, "trailing bytes"));
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse("checkpoint", format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::parse("checkpoint", e.to_string()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::parse("checkpoint", "shape overflow"))?;
        let values = r.f64s(n)?;
        entries.push((name, Tensor::new(dims, values)?));
    }
    r.finish()?;
    Ok(entries)
}

pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    write_atomic(path, &encode(entries))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Parameter entries of a store, in registration order.
pub fn store_entries(params: &ParamStore) -> Vec<(String, Tensor)> {
    params
        .iter()
        .map(|(n, t)| {
            let mut t = t.clone();
            t.zero_grad();
            (n.to_string(), t.with_requires_grad(false))
        })
        .collect()
}

/// Copies every `entries` tensor whose name matches a parameter into `params`.
/// Entries with other names are ignored; missing parameters are an error.
pub fn restore_params(params: &mut ParamStore, entries: &[(String, Tensor)]) -> Result<()> {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let (_, t) = entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::parse("checkpoint", format!("missing parameter {name}")))?;
        let dst = params.get_mut(id);
        if dst.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "restore_params",
                left: dst.shape().to_vec(),
                right: t.shape().to_vec(),
            });
        }
        dst.data_mut().copy_from_slice(t.data());
    }
    Ok(())
}
