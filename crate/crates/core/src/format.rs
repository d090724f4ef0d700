//! Binary containers.
//!
//! All containers share the same framing: a 4-byte magic, a little-endian
//! `u32` format version, then little-endian `u32` shapes followed by
//! row-major little-endian `f32` payloads.
//!
//! Single mixture (`GMMB`):
//!
//! ```text
//! magic "GMMB" | version u32 | K u32 | d u32 | means f32[K*d] | log_vars f32[K*d]
//! ```
//!
//! Mixture store (`GMMS`), written by `embed`:
//!
//! ```text
//! magic "GMMS" | version u32 | count u32 |
//!   count x ( id_len u32 | id utf-8 | K u32 | d u32 | means | log_vars )
//! ```
//!
//! Generator weights (`GMMW`):
//!
//! ```text
//! magic "GMMW" | version u32 | K u32 (0 = one component per token) | d u32 |
//!   flags u32 (bit 0: bias enabled) | seeds f32[K*d] |
//!   mean weight f32[d*d] | mean bias f32[d] | logvar weight f32[d*d] | logvar bias f32[d]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Affine, ComponentMode, GmmEmbedding, ParamGenWeights};

pub const FORMAT_VERSION: u32 = 1;
pub const GMM_MAGIC: [u8; 4] = *b"GMMB";
pub const STORE_MAGIC: [u8; 4] = *b"GMMS";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"GMMW";

#[derive(Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn header(magic: [u8; 4]) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(&magic);
        w.u32(FORMAT_VERSION);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_u32(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("length exceeds u32"));
    }

    pub fn f32s(&mut self, values: &[f64]) {
        self.buf.reserve(values.len() * 4);
        for &v in values {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }

    pub fn str(&mut self, s: &str) {
        self.len_u32(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn gmm_body(&mut self, g: &GmmEmbedding) {
        self.len_u32(g.components());
        self.len_u32(g.dim());
        self.f32s(g.means());
        self.f32s(g.log_vars());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Checks magic and version, leaving the cursor after the header.
    pub fn open(buf: &'a [u8], magic: [u8; 4], what: &str) -> Result<Self> {
        if buf.len() < 8 {
            return Err(Error::Corrupt(format!("{what}: truncated header")));
        }
        if buf[..4] != magic {
            return Err(Error::Corrupt(format!("{what}: bad magic")));
        }
        let mut r = Self { buf, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version { found: version, expected: FORMAT_VERSION });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.usize()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Corrupt("id is not utf-8".into()))
    }

    pub fn gmm_body(&mut self) -> Result<GmmEmbedding> {
        let k = self.usize()?;
        let d = self.usize()?;
        let n = k
            .checked_mul(d)
            .ok_or_else(|| Error::Corrupt("mixture shape overflow".into()))?;
        if n.saturating_mul(8) > self.remaining() {
            return Err(Error::Corrupt(format!("truncated mixture K={k}, d={d}")));
        }
        let means = self.f32s(n)?;
        let log_vars = self.f32s(n)?;
        GmmEmbedding::new(k, d, means, log_vars).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(Error::Corrupt(format!("{} trailing bytes", self.remaining())))
        }
    }
}

pub fn serialize_gmm(g: &GmmEmbedding) -> Vec<u8> {
    let mut w = ByteWriter::header(GMM_MAGIC);
    w.gmm_body(g);
    w.finish()
}

pub fn deserialize_gmm(bytes: &[u8]) -> Result<GmmEmbedding> {
    let mut r = ByteReader::open(bytes, GMM_MAGIC, "mixture")?;
    let g = r.gmm_body()?;
    r.finish()?;
    Ok(g)
}

pub fn serialize_store(records: &[(String, GmmEmbedding)]) -> Vec<u8> {
    let mut w = ByteWriter::header(STORE_MAGIC);
    w.len_u32(records.len());
    for (id, g) in records {
        w.str(id);
        w.gmm_body(g);
    }
    w.finish()
}

pub fn deserialize_store(bytes: &[u8]) -> Result<Vec<(String, GmmEmbedding)>> {
    let mut r = ByteReader::open(bytes, STORE_MAGIC, "mixture store")?;
    let n = r.usize()?;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = r.string()?;
        out.push((id, r.gmm_body()?));
    }
    r.finish()?;
    Ok(out)
}

/// Reads either a single mixture or a store; a single mixture gets an empty id.
pub fn read_gmms(path: &Path) -> Result<Vec<(String, GmmEmbedding)>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&GMM_MAGIC) {
        Ok(vec![(String::new(), deserialize_gmm(&bytes)?)])
    } else {
        deserialize_store(&bytes)
    }
}

pub fn write_store(path: &Path, records: &[(String, GmmEmbedding)]) -> Result<()> {
    fs::write(path, serialize_store(records))?;
    Ok(())
}

pub fn serialize_weights(w: &ParamGenWeights) -> Vec<u8> {
    let mut out = ByteWriter::header(WEIGHTS_MAGIC);
    out.len_u32(w.mode.seed_rows());
    out.len_u32(w.dim);
    out.u32(u32::from(w.use_bias));
    out.f32s(&w.seeds);
    for map in [&w.map_mean, &w.map_logvar] {
        out.f32s(&map.weight);
        out.f32s(&map.bias);
    }
    out.finish()
}

pub fn deserialize_weights(bytes: &[u8]) -> Result<ParamGenWeights> {
    let mut r = ByteReader::open(bytes, WEIGHTS_MAGIC, "weights")?;
    let k = r.usize()?;
    let d = r.usize()?;
    let flags = r.u32()?;
    if flags > 1 {
        return Err(Error::Corrupt(format!("unknown weight flags {flags:#x}")));
    }
    let expected = k
        .checked_add(2 * d + 2)
        .and_then(|rows| rows.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Corrupt("weights shape overflow".into()))?;
    if expected != r.remaining() {
        return Err(Error::Corrupt(format!(
            "weights K={k}, d={d} need {expected} payload bytes, found {}",
            r.remaining()
        )));
    }
    let seeds = r.f32s(k * d)?;
    let mut maps = Vec::with_capacity(2);
    for _ in 0..2 {
        let weight = r.f32s(d * d)?;
        let bias = r.f32s(d)?;
        maps.push(Affine { weight, bias });
    }
    r.finish()?;
    let map_logvar = maps.pop().unwrap();
    let map_mean = maps.pop().unwrap();
    let w = ParamGenWeights {
        mode: if k == 0 { ComponentMode::PerToken } else { ComponentMode::Fixed(k) },
        dim: d,
        seeds,
        map_mean,
        map_logvar,
        use_bias: flags & 1 == 1,
    };
    w.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(w)
}

pub fn save_weights(path: &Path, w: &ParamGenWeights) -> Result<()> {
    fs::write(path, serialize_weights(w))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ParamGenWeights> {
    deserialize_weights(&fs::read(path)?)
}
