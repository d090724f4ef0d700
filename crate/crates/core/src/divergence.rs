//! Similarity and divergence kernels.
//!
//! Scores follow the retrieval direction `KL(p_response || p_context)`: every
//! response component is matched to its nearest context component.

use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::{seeded_rng, standard_normal};
use crate::types::{GmmEmbedding, TokenMatrix};
use rand::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Best context component for one response component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentMatch {
    pub context_component: usize,
    pub kl: f64,
}

/// Decomposition of the min-matching approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBreakdown {
    pub total: f64,
    pub per_response_component: Vec<ComponentMatch>,
    /// `log(K / L)`.
    pub log_ratio_term: f64,
}

impl KlBreakdown {
    pub fn mean_component_kl(&self) -> f64 {
        let n = self.per_response_component.len() as f64;
        self.per_response_component.iter().map(|m| m.kl).sum::<f64>() / n
    }
}

/// KL between two diagonal Gaussians, `KL(N(mu_r, e^logvar_r) || N(mu_c, e^logvar_c))`.
///
/// `1/2 * sum_j [ logvar_c - logvar_r + (var_r + (mu_r - mu_c)^2) / var_c - 1 ]`
pub fn gauss_kl_diag(mu_r: &[f64], logvar_r: &[f64], mu_c: &[f64], logvar_c: &[f64]) -> Result<f64> {
    let d = mu_r.len();
    for other in [logvar_r.len(), mu_c.len(), logvar_c.len()] {
        check_dim(d, other)?;
    }
    check_finite(mu_r, "response mean")?;
    check_finite(logvar_r, "response log-variance")?;
    check_finite(mu_c, "context mean")?;
    check_finite(logvar_c, "context log-variance")?;
    Ok(component_kl(mu_r, logvar_r, mu_c, logvar_c))
}

/// Unchecked [`gauss_kl_diag`]; slices must have equal length.
///
/// The variance part of each dimension, `x + e^-x - 1` with
/// `x = logvar_c - logvar_r`, is evaluated through `exp_m1` and floored at
/// zero so identical components score exactly 0.
#[inline]
pub fn component_kl(mu_r: &[f64], logvar_r: &[f64], mu_c: &[f64], logvar_c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..mu_r.len() {
        let x = logvar_c[j] - logvar_r[j];
        let diff = mu_r[j] - mu_c[j];
        acc += (x + (-x).exp_m1()).max(0.0) + diff * diff * (-logvar_c[j]).exp();
    }
    0.5 * acc
}

/// Min-matching approximation of `KL(resp || ctx)`:
/// `(1/L) sum_l min_k KL(resp_l || ctx_k) + log(K/L)`.
///
/// Ties in `min_k` go to the lowest context component index.
pub fn gmm_kl_approx(resp: &GmmEmbedding, ctx: &GmmEmbedding) -> Result<KlBreakdown> {
    check_dim(ctx.dim(), resp.dim())?;
    let per_response_component: Vec<ComponentMatch> = (0..resp.components())
        .map(|l| best_match(resp, l, ctx))
        .collect();
    let log_ratio_term = (ctx.components() as f64 / resp.components() as f64).ln();
    let mean = per_response_component.iter().map(|m| m.kl).sum::<f64>()
        / resp.components() as f64;
    Ok(KlBreakdown { total: mean + log_ratio_term, per_response_component, log_ratio_term })
}

fn best_match(resp: &GmmEmbedding, l: usize, ctx: &GmmEmbedding) -> ComponentMatch {
    let (mu_r, lv_r) = (resp.mean(l), resp.log_var(l));
    let mut best = ComponentMatch { context_component: 0, kl: f64::INFINITY };
    for k in 0..ctx.components() {
        let kl = component_kl(mu_r, lv_r, ctx.mean(k), ctx.log_var(k));
        if kl < best.kl {
            best = ComponentMatch { context_component: k, kl };
        }
    }
    best
}

/// Same value as `gmm_kl_approx(resp, ctx).total` without allocating.
///
/// Panics if the dimensions differ.
pub fn approx_kl_total(resp: &GmmEmbedding, ctx: &GmmEmbedding) -> f64 {
    assert_eq!(resp.dim(), ctx.dim(), "dimension mismatch");
    let mut sum = 0.0;
    for l in 0..resp.components() {
        let (mu_r, lv_r) = (resp.mean(l), resp.log_var(l));
        let mut best = f64::INFINITY;
        for k in 0..ctx.components() {
            let kl = component_kl(mu_r, lv_r, ctx.mean(k), ctx.log_var(k));
            if kl < best {
                best = kl;
            }
        }
        sum += best;
    }
    sum / resp.components() as f64 + (ctx.components() as f64 / resp.components() as f64).ln()
}

/// Scores one context against many responses; output order follows `responses`.
pub fn score_batch(ctx: &GmmEmbedding, responses: &[GmmEmbedding]) -> Result<Vec<f64>> {
    if let Some(r) = responses.iter().find(|r| r.dim() != ctx.dim()) {
        return Err(Error::DimMismatch { expected: ctx.dim(), got: r.dim() });
    }
    let score = |r: &GmmEmbedding| approx_kl_total(r, ctx);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(responses.par_iter().map(score).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(responses.iter().map(score).collect())
    }
}

/// Monte-Carlo estimate of `KL(p || q)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Log density of an equal-weight diagonal mixture, via log-sum-exp.
pub fn gmm_log_density(g: &GmmEmbedding, z: &[f64]) -> f64 {
    let mut logs = Vec::with_capacity(g.components());
    for k in 0..g.components() {
        let (mu, lv) = (g.mean(k), g.log_var(k));
        let mut acc = 0.0;
        for j in 0..z.len() {
            let diff = z[j] - mu[j];
            acc += LN_2PI + lv[j] + diff * diff * (-lv[j]).exp();
        }
        logs.push(-0.5 * acc);
    }
    log_sum_exp(&logs) - (g.components() as f64).ln()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Samples `z ~ p` (uniform component, then Gaussian) and averages
/// `log p(z) - log q(z)`.
pub fn gmm_kl_monte_carlo(p: &GmmEmbedding, q: &GmmEmbedding, n_samples: usize, seed: u64) -> Result<McEstimate> {
    check_dim(p.dim(), q.dim())?;
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!("n_samples must be >= 1000, got {n_samples}")));
    }
    let mut rng = seeded_rng(seed);
    let d = p.dim();
    let mut z = vec![0.0; d];
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..n_samples {
        let k = rng.random_range(0..p.components());
        let (mu, lv) = (p.mean(k), p.log_var(k));
        for j in 0..d {
            z[j] = mu[j] + (0.5 * lv[j]).exp() * standard_normal(&mut rng);
        }
        let x = gmm_log_density(p, &z) - gmm_log_density(q, &z);
        // Welford update
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (n_samples - 1) as f64;
    Ok(McEstimate { estimate: mean, std_error: (var / n_samples as f64).sqrt() })
}

/// Late-interaction score: for every context row, the best inner product with
/// any response row, summed over context rows.
pub fn colbert_maxsim(ctx_tokens: &TokenMatrix, resp_tokens: &TokenMatrix) -> Result<f64> {
    check_dim(ctx_tokens.dim(), resp_tokens.dim())?;
    Ok(ctx_tokens
        .iter_rows()
        .map(|c| {
            resp_tokens
                .iter_rows()
                .map(|r| dot(c, r))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum())
}

/// Inner product of two pooled vectors.
pub fn sbert_dot(pooled_a: &[f64], pooled_b: &[f64]) -> Result<f64> {
    check_dim(pooled_a.len(), pooled_b.len())?;
    Ok(dot(pooled_a, pooled_b))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
