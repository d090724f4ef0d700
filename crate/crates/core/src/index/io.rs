//! Single-file index container.
//!
//! ```text
//! magic "GMMI" | version u32 | d u32 | cells u32 | n_probe u32 | responses u32 |
//!   centroids f32[cells*d] |
//!   responses x ( id_len u32 | id utf-8 | K u32 | d u32 | means f32 | log_vars f32 ) |
//!   cells x ( len u32 | len x ( response u32 | component u32 ) )
//! ```
//!
//! List means are not duplicated on disk; they are rebuilt from the stored
//! mixtures on load.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{GmmIndex, IndexEntry, InvertedList};
use crate::error::{Error, Result};
use crate::format::{ByteReader, ByteWriter};

pub const INDEX_MAGIC: [u8; 4] = *b"GMMI";

pub fn serialize_index(index: &GmmIndex) -> Vec<u8> {
    let mut w = ByteWriter::header(INDEX_MAGIC);
    w.len_u32(index.dim);
    w.len_u32(index.cells());
    w.len_u32(index.n_probe);
    w.len_u32(index.gmms.len());
    w.f32s(&index.centroids);
    for (id, g) in index.ids.iter().zip(&index.gmms) {
        w.str(id);
        w.gmm_body(g);
    }
    for list in &index.lists {
        w.len_u32(list.entries.len());
        for e in &list.entries {
            w.u32(e.response);
            w.u32(e.component);
        }
    }
    w.finish()
}

pub fn deserialize_index(bytes: &[u8]) -> Result<GmmIndex> {
    let corrupt = |msg: String| Error::Corrupt(format!("index: {msg}"));
    let mut r = ByteReader::open(bytes, INDEX_MAGIC, "index")?;
    let dim = r.usize()?;
    let cells = r.usize()?;
    let n_probe = r.usize()?;
    let n = r.usize()?;
    if dim == 0 || cells == 0 || n == 0 {
        return Err(corrupt(format!("empty shape d={dim}, cells={cells}, responses={n}")));
    }
    if n_probe == 0 || n_probe > cells {
        return Err(corrupt(format!("n_probe {n_probe} outside 1..={cells}")));
    }
    if cells.saturating_mul(dim).saturating_mul(4) > r.remaining() {
        return Err(corrupt("truncated centroids".into()));
    }
    let centroids = r.f32s(cells * dim)?;
    let mut ids = Vec::with_capacity(n.min(1 << 20));
    let mut gmms = Vec::with_capacity(n.min(1 << 20));
    let mut lookup = HashMap::new();
    for i in 0..n {
        let id = r.string()?;
        let g = r.gmm_body()?;
        if g.dim() != dim {
            return Err(corrupt(format!("response {id:?} has dim {}", g.dim())));
        }
        if lookup.insert(id.clone(), i).is_some() {
            return Err(corrupt(format!("duplicate id {id:?}")));
        }
        ids.push(id);
        gmms.push(g);
    }
    let mut index = GmmIndex {
        dim,
        centroids,
        lists: vec![InvertedList { entries: Vec::new(), means: Vec::new() }; cells],
        n_probe,
        ids,
        gmms,
        lookup,
    };
    let mut seen: Vec<Vec<bool>> = index.gmms.iter().map(|g| vec![false; g.components()]).collect();
    for cell in 0..cells {
        let len = r.usize()?;
        for _ in 0..len {
            let e = IndexEntry { response: r.u32()?, component: r.u32()? };
            let slot = seen
                .get_mut(e.response as usize)
                .and_then(|s| s.get_mut(e.component as usize))
                .ok_or_else(|| corrupt(format!("entry {e:?} out of range")))?;
            if *slot {
                return Err(corrupt(format!("entry {e:?} listed twice")));
            }
            *slot = true;
            index.push_entry(cell, e);
        }
    }
    if seen.iter().flatten().any(|s| !s) {
        return Err(corrupt("some component means are not indexed".into()));
    }
    r.finish()?;
    Ok(index)
}

pub fn save_index(path: &Path, index: &GmmIndex) -> Result<()> {
    fs::write(path, serialize_index(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<GmmIndex> {
    deserialize_index(&fs::read(path)?)
}
