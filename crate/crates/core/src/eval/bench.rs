use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;

use crate::divergence::{colbert_maxsim, dot};
use crate::error::{Error, Result};
use crate::index::{GmmIndex, QueryParams};
use crate::rng::seeded_rng;
use crate::types::{GmmEmbedding, TokenMatrix};

/// A backend that ranks a corpus for one query and returns corpus positions
/// (or stored ids) best first.
pub trait Retriever {
    type Query;
    fn name(&self) -> &str;
    fn retrieve(&self, query: &Self::Query, top_m: usize) -> Result<Vec<String>>;
}

fn top_by_score(scores: Vec<f64>, top_m: usize) -> Vec<String> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let by = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if top_m > 0 && top_m < idx.len() {
        idx.select_nth_unstable_by(top_m - 1, by);
        idx.truncate(top_m);
    }
    idx.sort_by(by);
    idx.into_iter().map(|i| i.to_string()).collect()
}

/// Single-vector dot-product scan over pooled response vectors.
pub struct DotRetriever {
    pub vectors: Vec<Vec<f64>>,
}

impl Retriever for DotRetriever {
    type Query = Vec<f64>;
    fn name(&self) -> &str {
        "dot"
    }
    fn retrieve(&self, query: &Vec<f64>, top_m: usize) -> Result<Vec<String>> {
        Ok(top_by_score(self.vectors.iter().map(|v| dot(query, v)).collect(), top_m))
    }
}

/// Late-interaction max-sim scan over response token matrices.
pub struct MaxSimRetriever {
    pub docs: Vec<TokenMatrix>,
}

impl Retriever for MaxSimRetriever {
    type Query = TokenMatrix;
    fn name(&self) -> &str {
        "maxsim"
    }
    fn retrieve(&self, query: &TokenMatrix, top_m: usize) -> Result<Vec<String>> {
        let scores = self.docs.iter().map(|d| colbert_maxsim(query, d)).collect::<Result<_>>()?;
        Ok(top_by_score(scores, top_m))
    }
}

/// Inverted-file pre-retrieval with approximate-KL re-ranking.
pub struct GmmIndexRetriever<'a> {
    pub index: &'a GmmIndex,
    pub params: QueryParams,
}

impl Retriever for GmmIndexRetriever<'_> {
    type Query = GmmEmbedding;
    fn name(&self) -> &str {
        "gmm-index"
    }
    fn retrieve(&self, query: &GmmEmbedding, top_m: usize) -> Result<Vec<String>> {
        let p = QueryParams { top_m, ..self.params.clone() };
        Ok(self.index.query(query, &p)?.into_iter().map(|c| c.id).collect())
    }
}

/// Approximate KL against every stored response.
pub struct GmmScanRetriever<'a> {
    pub index: &'a GmmIndex,
}

impl Retriever for GmmScanRetriever<'_> {
    type Query = GmmEmbedding;
    fn name(&self) -> &str {
        "gmm-scan"
    }
    fn retrieve(&self, query: &GmmEmbedding, top_m: usize) -> Result<Vec<String>> {
        Ok(self.index.exhaustive(query, top_m)?.into_iter().map(|c| c.id).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub backend: String,
    pub queries: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// `n` positions in `0..pool`, without replacement while `n <= pool` and
/// with replacement beyond that.
pub fn select_queries(pool: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if pool == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("need a non-empty pool and n >= 1, got pool={pool}, n={n}")));
    }
    let mut rng = seeded_rng(seed);
    if n <= pool {
        Ok(sample(&mut rng, pool, n).into_vec())
    } else {
        Ok((0..n).map(|_| rng.random_range(0..pool)).collect())
    }
}

/// Times `n_queries` seeded queries drawn from `queries`, after `warmup`
/// untimed ones. p95 uses the nearest-rank definition.
pub fn bench_latency<R: Retriever>(
    backend: &R,
    queries: &[R::Query],
    n_queries: usize,
    top_m: usize,
    warmup: usize,
    seed: u64,
) -> Result<LatencyReport> {
    let picks = select_queries(queries.len(), n_queries, seed)?;
    for &i in picks.iter().cycle().take(warmup.min(picks.len())) {
        std::hint::black_box(backend.retrieve(&queries[i], top_m)?);
    }
    let mut times = Vec::with_capacity(picks.len());
    for &i in &picks {
        let start = Instant::now();
        std::hint::black_box(backend.retrieve(&queries[i], top_m)?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    let rank = ((0.95 * times.len() as f64).ceil() as usize).max(1);
    Ok(LatencyReport { backend: backend.name().to_string(), queries: times.len(), mean_ms, p95_ms: times[rank - 1] })
}
