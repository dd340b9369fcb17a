//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic "CHARNETM" | u32 format_version
//! u32 len | spec as TOML
//! u32 n   | n × (u32 len | label)
//! u32 len | alphabet, one escaped symbol per line
//! u32 n   | n × (u32 len | name | u32 rank | rank × u64 dim | f32 payload)
//! u64 FNV-1a of every preceding byte
//! ```

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use super::network::{Model, Weights};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::text::Alphabet;

pub const MAGIC: &[u8; 8] = b"CHARNETM";
pub const FORMAT_VERSION: u32 = 1;

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut out, &model.spec.to_toml());
    put_u32(&mut out, model.labels.len());
    for l in &model.labels {
        put_str(&mut out, l);
    }
    put_str(&mut out, &model.alphabet.serialize());
    put_u32(&mut out, model.weights.len());
    for (name, t) in &model.weights {
        put_str(&mut out, name);
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupted(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Corrupted(format!("invalid UTF-8: {e}")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Corrupted(format!("{} bytes is too short for a checkpoint", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if checksum(body) != stored {
        return Err(Error::Corrupted("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Corrupted("not a charnet checkpoint".into()));
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let spec = ModelSpec::from_toml(r.string()?)?;
    let n_labels = r.u32()?;
    let labels = (0..n_labels).map(|_| r.string().map(str::to_owned)).collect::<Result<Vec<_>>>()?;
    let alphabet = Alphabet::parse(r.string()?).map_err(|e| Error::Corrupted(format!("alphabet: {e}")))?;
    let n_blocks = r.u32()?;
    let mut weights = Weights::new();
    for _ in 0..n_blocks {
        let name = r.string()?.to_owned();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len.ok_or_else(|| Error::Corrupted(format!("{name}: shape {shape:?} overflows")))?;
        let raw = r.take(len.checked_mul(4).ok_or_else(|| Error::Corrupted(format!("{name}: too large")))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Corrupted(format!("{name}: {e}")))?;
        if weights.insert(name.clone(), t).is_some() {
            return Err(Error::Corrupted(format!("duplicate weight block {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Corrupted(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let model = Model { spec, weights, labels, alphabet };
    model.check()?;
    Ok(model)
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = to_bytes(model);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
