//! Inverted file over response component means.
//!
//! Every component mean of every stored response is assigned to its nearest
//! coarse centroid. A query searches, for each context component mean, the
//! `n_probe` nearest cells for the `per_component_k` nearest means, collects
//! the owning responses and re-ranks them by the full approximate KL.

mod io;
mod kmeans;

use std::collections::{BTreeMap, HashMap};

pub use io::{deserialize_index, load_index, save_index, serialize_index, INDEX_MAGIC};
pub use kmeans::{distortion, kmeans, nearest_centroid};

use crate::divergence::{approx_kl_total, squared_l2};
use crate::error::{check_dim, Error, Result};
use crate::types::GmmEmbedding;

pub const DEFAULT_PER_COMPONENT_K: usize = 10;
pub const DEFAULT_KMEANS_ITERS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub response: u32,
    pub component: u32,
}

/// One cell: entries plus their means, contiguous for scanning.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedList {
    pub entries: Vec<IndexEntry>,
    means: Vec<f64>,
}

impl InvertedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean(&self, pos: usize, dim: usize) -> &[f64] {
        &self.means[pos * dim..(pos + 1) * dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexParams {
    /// Number of cells; `None` picks `ceil(sqrt(total means))`.
    pub cells: Option<usize>,
    /// Default cells probed per query; `None` picks `max(1, cells / 16)`.
    pub n_probe: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self { cells: None, n_probe: None, kmeans_iters: DEFAULT_KMEANS_ITERS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryParams {
    pub per_component_k: usize,
    pub top_m: usize,
    /// Overrides the index's stored `n_probe`.
    pub n_probe: Option<usize>,
}

impl QueryParams {
    pub fn top(top_m: usize) -> Self {
        Self { per_component_k: DEFAULT_PER_COMPONENT_K, top_m, n_probe: None }
    }
}

/// A re-ranked response: id, approximate KL (lower is better) and the context
/// components whose pre-retrieval surfaced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub id: String,
    pub score: f64,
    pub matched_components: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GmmIndex {
    dim: usize,
    centroids: Vec<f64>,
    lists: Vec<InvertedList>,
    n_probe: usize,
    ids: Vec<String>,
    gmms: Vec<GmmEmbedding>,
    lookup: HashMap<String, usize>,
}

pub fn default_cells(total_means: usize) -> usize {
    ((total_means as f64).sqrt().ceil() as usize).clamp(1, total_means.max(1))
}

pub fn default_n_probe(cells: usize) -> usize {
    (cells / 16).max(1)
}

/// Flattens all component means, trains the coarse quantizer on them and
/// fills the inverted lists. Stored mixtures are rounded to `f32` so a saved
/// and reloaded index answers identically.
pub fn build_index(responses: &[(String, GmmEmbedding)], params: &IndexParams) -> Result<GmmIndex> {
    let first = responses.first().ok_or(Error::EmptyCorpus)?;
    let dim = first.1.dim();
    let mut lookup = HashMap::with_capacity(responses.len());
    for (i, (id, g)) in responses.iter().enumerate() {
        check_dim(dim, g.dim())?;
        if lookup.insert(id.clone(), i).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate response id {id:?}")));
        }
    }
    let gmms: Vec<GmmEmbedding> = responses.iter().map(|(_, g)| g.to_storage_precision()).collect();
    let flat: Vec<f64> = gmms.iter().flat_map(|g| g.means().iter().copied()).collect();
    let total = flat.len() / dim;
    let cells = params.cells.unwrap_or_else(|| default_cells(total));
    if cells == 0 || cells > total {
        return Err(Error::InvalidArgument(format!("cells must be in 1..={total}, got {cells}")));
    }
    let n_probe = params.n_probe.unwrap_or_else(|| default_n_probe(cells)).clamp(1, cells);
    let centroids: Vec<f64> = kmeans(&flat, dim, cells, params.kmeans_iters, params.seed)?
        .into_iter()
        .map(|v| v as f32 as f64)
        .collect();
    let mut index = GmmIndex {
        dim,
        lists: vec![InvertedList { entries: Vec::new(), means: Vec::new() }; cells],
        centroids,
        n_probe,
        ids: responses.iter().map(|(id, _)| id.clone()).collect(),
        gmms,
        lookup,
    };
    for r in 0..index.gmms.len() {
        for c in 0..index.gmms[r].components() {
            let cell = nearest_centroid(index.gmms[r].mean(c), &index.centroids, dim).0;
            index.push_entry(cell, IndexEntry { response: r as u32, component: c as u32 });
        }
    }
    Ok(index)
}

impl GmmIndex {
    fn push_entry(&mut self, cell: usize, e: IndexEntry) {
        let mean = self.gmms[e.response as usize].mean(e.component as usize);
        let list = &mut self.lists[cell];
        list.means.extend_from_slice(mean);
        list.entries.push(e);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.lists.len()
    }

    pub fn n_probe(&self) -> usize {
        self.n_probe
    }

    pub fn set_n_probe(&mut self, n_probe: usize) {
        self.n_probe = n_probe.clamp(1, self.cells());
    }

    pub fn len(&self) -> usize {
        self.gmms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gmms.is_empty()
    }

    pub fn total_entries(&self) -> usize {
        self.lists.iter().map(InvertedList::len).sum()
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn centroid(&self, cell: usize) -> &[f64] {
        &self.centroids[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn lists(&self) -> &[InvertedList] {
        &self.lists
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&GmmEmbedding> {
        self.lookup.get(id).map(|&i| &self.gmms[i])
    }

    pub fn responses(&self) -> impl Iterator<Item = (&str, &GmmEmbedding)> {
        self.ids.iter().map(String::as_str).zip(&self.gmms)
    }

    /// Cells to visit for one query vector, nearest first (ties by cell index).
    pub fn probe_cells(&self, query: &[f64], n_probe: usize) -> Vec<usize> {
        let mut cells: Vec<(f64, usize)> = self
            .centroids
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, centroid)| (squared_l2(query, centroid), c))
            .collect();
        let n = n_probe.clamp(1, cells.len());
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if n < cells.len() {
            cells.select_nth_unstable_by(n - 1, by_dist);
            cells.truncate(n);
        }
        cells.sort_by(by_dist);
        cells.into_iter().map(|(_, c)| c).collect()
    }

    /// The `k` stored means nearest to `query` in each probed cell, cell by
    /// cell in probe order. Taking `k` per cell keeps the result a superset
    /// whenever `k` or `n_probe` grows.
    pub fn nearest_entries(&self, query: &[f64], k: usize, n_probe: usize) -> Vec<IndexEntry> {
        let key = |a: &(f64, IndexEntry), b: &(f64, IndexEntry)| {
            a.0.total_cmp(&b.0)
                .then(a.1.response.cmp(&b.1.response))
                .then(a.1.component.cmp(&b.1.component))
        };
        let mut out = Vec::new();
        if k == 0 {
            return out;
        }
        for cell in self.probe_cells(query, n_probe) {
            let list = &self.lists[cell];
            let mut found: Vec<(f64, IndexEntry)> = list
                .entries
                .iter()
                .enumerate()
                .map(|(pos, e)| (squared_l2(query, list.mean(pos, self.dim)), *e))
                .collect();
            if k < found.len() {
                found.select_nth_unstable_by(k - 1, key);
                found.truncate(k);
            }
            found.sort_by(key);
            out.extend(found.into_iter().map(|(_, e)| e));
        }
        out
    }

    /// Pre-retrieval: response position -> context components that surfaced it.
    pub fn candidates(&self, ctx: &GmmEmbedding, per_component_k: usize, n_probe: usize) -> Result<BTreeMap<usize, Vec<usize>>> {
        check_dim(self.dim, ctx.dim())?;
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for k in 0..ctx.components() {
            for e in self.nearest_entries(ctx.mean(k), per_component_k, n_probe) {
                let hits = out.entry(e.response as usize).or_default();
                if hits.last() != Some(&k) {
                    hits.push(k);
                }
            }
        }
        Ok(out)
    }

    /// Pre-retrieval followed by exact re-ranking, ascending by `(score, id)`.
    pub fn query(&self, ctx: &GmmEmbedding, params: &QueryParams) -> Result<Vec<ScoredCandidate>> {
        if params.top_m < 1 {
            return Err(Error::InvalidArgument("top_m must be >= 1".into()));
        }
        let n_probe = params.n_probe.unwrap_or(self.n_probe);
        let cands = self.candidates(ctx, params.per_component_k, n_probe)?;
        let mut scored: Vec<ScoredCandidate> = cands
            .into_iter()
            .map(|(r, matched)| ScoredCandidate {
                id: self.ids[r].clone(),
                score: approx_kl_total(&self.gmms[r], ctx),
                matched_components: matched,
            })
            .collect();
        sort_candidates(&mut scored);
        scored.truncate(params.top_m);
        Ok(scored)
    }

    /// Runs independent queries, in parallel when enabled; output order
    /// matches `contexts`.
    pub fn query_batch(&self, contexts: &[GmmEmbedding], params: &QueryParams) -> Result<Vec<Vec<ScoredCandidate>>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            contexts.par_iter().map(|c| self.query(c, params)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            contexts.iter().map(|c| self.query(c, params)).collect()
        }
    }

    /// Full approximate-KL ranking over every stored response.
    pub fn exhaustive(&self, ctx: &GmmEmbedding, top_m: usize) -> Result<Vec<ScoredCandidate>> {
        check_dim(self.dim, ctx.dim())?;
        Ok(exhaustive_scan(self.ids.iter().map(String::as_str).zip(&self.gmms), ctx, top_m))
    }
}

fn sort_candidates(c: &mut [ScoredCandidate]) {
    c.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
}

/// Scores every response against `ctx` and keeps the best `top_m`, ordered
/// by `(score, id)`.
pub fn exhaustive_scan<'a>(
    responses: impl IntoIterator<Item = (&'a str, &'a GmmEmbedding)>,
    ctx: &GmmEmbedding,
    top_m: usize,
) -> Vec<ScoredCandidate> {
    let mut scored: Vec<ScoredCandidate> = responses
        .into_iter()
        .map(|(id, g)| ScoredCandidate {
            id: id.to_string(),
            score: approx_kl_total(g, ctx),
            matched_components: Vec::new(),
        })
        .collect();
    let by = |a: &ScoredCandidate, b: &ScoredCandidate| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id));
    if top_m > 0 && top_m < scored.len() {
        scored.select_nth_unstable_by(top_m - 1, by);
        scored.truncate(top_m);
    }
    scored.sort_by(by);
    scored
}
