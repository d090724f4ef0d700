//! Browser bindings for the demo page in `www/`. Every export takes plain
//! numbers or strings and returns a JSON document; the `*_json` functions do
//! the work and are callable natively.

use gmmret::divergence::{gmm_kl_approx, gmm_kl_monte_carlo};
use gmmret::index::{build_index, IndexParams, QueryParams};
use gmmret::paramgen::{attend, generate_gmm, hash_embed, init_weights, tokenize};
use gmmret::rng::{seeded_rng, standard_normal};
use gmmret::{ComponentMode, GmmEmbedding};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
pub struct MixtureInput {
    pub means: Vec<Vec<f64>>,
    pub log_vars: Vec<Vec<f64>>,
}

impl MixtureInput {
    fn to_gmm(&self) -> gmmret::Result<GmmEmbedding> {
        let k = self.means.len();
        let dim = self.means.first().map_or(0, Vec::len);
        GmmEmbedding::new(k, dim, self.means.concat(), self.log_vars.concat())
    }
}

#[derive(Debug, Deserialize)]
pub struct KlRequest {
    pub response: MixtureInput,
    pub context: MixtureInput,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct KlReport {
    pub approx: f64,
    pub log_ratio_term: f64,
    /// Per response component: best context component and its KL.
    pub matches: Vec<(usize, f64)>,
    pub monte_carlo: f64,
    pub monte_carlo_se: f64,
}

pub fn kl_json(request: &str) -> Result<String, String> {
    let req: KlRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let resp = req.response.to_gmm().map_err(|e| e.to_string())?;
    let ctx = req.context.to_gmm().map_err(|e| e.to_string())?;
    let approx = gmm_kl_approx(&resp, &ctx).map_err(|e| e.to_string())?;
    let mc = gmm_kl_monte_carlo(&resp, &ctx, req.samples.max(1), req.seed).map_err(|e| e.to_string())?;
    let report = KlReport {
        approx: approx.total,
        log_ratio_term: approx.log_ratio_term,
        matches: approx.per_response_component.iter().map(|m| (m.context_component, m.kl)).collect(),
        monte_carlo: mc.estimate,
        monte_carlo_se: mc.std_error,
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct AttentionReport {
    pub tokens: Vec<String>,
    /// `tokens x components`.
    pub weights: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub log_vars: Vec<Vec<f64>>,
}

/// Untrained generator over hashed tokens, so the page shows how seed
/// attention spreads a sentence over `k` components.
pub fn attention_json(text: &str, k: usize, dim: usize, seed: u64) -> Result<String, String> {
    let tokens = tokenize(text);
    let x = hash_embed(text, dim, seed).map_err(|e| e.to_string())?;
    let w = init_weights(ComponentMode::Fixed(k), dim, true, seed ^ 0x5eed).map_err(|e| e.to_string())?;
    let att = attend(&x, &w).map_err(|e| e.to_string())?;
    let gmm = generate_gmm(&x, &w).map_err(|e| e.to_string())?;
    let report = AttentionReport {
        tokens,
        weights: (0..att.tokens).map(|i| (0..att.components).map(|c| att.weight(i, c)).collect()).collect(),
        means: (0..gmm.components()).map(|c| gmm.mean(c).to_vec()).collect(),
        log_vars: (0..gmm.components()).map(|c| gmm.log_var(c).to_vec()).collect(),
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Serialize)]
pub struct SearchReport {
    pub centroids: Vec<Vec<f64>>,
    /// Response id, component means.
    pub responses: Vec<(String, Vec<Vec<f64>>)>,
    pub query: Vec<Vec<f64>>,
    pub probed: Vec<Vec<usize>>,
    pub hits: Vec<SearchHit>,
    pub exact: Vec<SearchHit>,
}

/// Random 2-D store of two-component responses searched with a two-component
/// query centred at (`qx`, `qy`).
pub fn search_json(n: usize, cells: usize, n_probe: usize, qx: f64, qy: f64, seed: u64) -> Result<String, String> {
    let mut rng = seeded_rng(seed);
    let mut point = |cx: f64, cy: f64, s: f64| vec![cx + s * standard_normal(&mut rng), cy + s * standard_normal(&mut rng)];
    let mut store = Vec::with_capacity(n);
    for i in 0..n {
        let c = point(0.0, 0.0, 3.0);
        let means = vec![point(c[0], c[1], 0.6), point(c[0], c[1], 0.6)];
        let gmm = GmmEmbedding::isotropic(&means).map_err(|e| e.to_string())?;
        store.push((format!("r{i}"), gmm));
    }
    let query_means = vec![point(qx, qy, 0.4), point(qx, qy, 0.4)];
    let query = GmmEmbedding::isotropic(&query_means).map_err(|e| e.to_string())?;

    let params = IndexParams { cells: Some(cells), n_probe: Some(n_probe), seed, ..Default::default() };
    let index = build_index(&store, &params).map_err(|e| e.to_string())?;
    let qp = QueryParams { per_component_k: 5, top_m: 5, n_probe: None };
    let hits = index.query(&query, &qp).map_err(|e| e.to_string())?;
    let exact = index.exhaustive(&query, 5).map_err(|e| e.to_string())?;
    let to_hits = |v: Vec<gmmret::index::ScoredCandidate>| v.into_iter().map(|c| SearchHit { id: c.id, score: c.score }).collect();
    let report = SearchReport {
        centroids: (0..index.cells()).map(|c| index.centroid(c).to_vec()).collect(),
        responses: store.iter().map(|(id, g)| (id.clone(), (0..g.components()).map(|c| g.mean(c).to_vec()).collect())).collect(),
        probed: query_means.iter().map(|m| index.probe_cells(m, index.n_probe())).collect(),
        query: query_means,
        hits: to_hits(hits),
        exact: to_hits(exact),
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn kl(request: &str) -> Result<String, JsError> {
    kl_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn attention(text: &str, k: usize, dim: usize, seed: u32) -> Result<String, JsError> {
    attention_json(text, k, dim, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn search(n: usize, cells: usize, n_probe: usize, qx: f64, qy: f64, seed: u32) -> Result<String, JsError> {
    search_json(n, cells, n_probe, qx, qy, seed as u64).map_err(|e| JsError::new(&e))
}
