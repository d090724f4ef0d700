use crate::divergence::{component_kl, log_sum_exp};
use crate::error::{Error, Result};
use crate::paramgen::{backward, forward, GenCache};
use crate::types::{ParamGenWeights, TokenMatrix};

/// A batch of (context, response) token matrices. Every response acts as a
/// negative for every other pair's context.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pairs: Vec<(&'a TokenMatrix, &'a TokenMatrix)>,
}

impl<'a> Batch<'a> {
    pub fn new(pairs: Vec<(&'a TokenMatrix, &'a TokenMatrix)>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch needs at least 2 pairs for in-batch negatives, got {}",
                pairs.len()
            )));
        }
        let d = pairs[0].0.dim();
        for (c, r) in &pairs {
            crate::error::check_dim(d, c.dim())?;
            crate::error::check_dim(d, r.dim())?;
        }
        Ok(Self { pairs })
    }

    pub fn from_owned(pairs: &'a [(TokenMatrix, TokenMatrix)]) -> Result<Self> {
        Self::new(pairs.iter().map(|(c, r)| (c, r)).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].0.dim()
    }
}

/// Mean N-pair loss and its per-pair terms.
#[derive(Debug, Clone, PartialEq)]
pub struct NpairLoss {
    pub loss: f64,
    pub per_pair: Vec<f64>,
}

/// Gradients for both generators, shaped like their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub ctx: ParamGenWeights,
    pub resp: ParamGenWeights,
}

/// `loss_i = -log softmax_j(-KL(r_j || c_i))[i]`, averaged over the batch.
///
/// The denominator runs over every response in the batch, the true one included.
pub fn npair_loss(batch: &Batch<'_>, ctx_w: &ParamGenWeights, resp_w: &ParamGenWeights) -> Result<NpairLoss> {
    Ok(evaluate(batch, ctx_w, resp_w, false)?.0)
}

/// [`npair_loss`] together with its analytic gradient.
///
/// `min_k` passes gradient only to the selected context component (lowest
/// index on ties) and the log-variance clamp blocks gradient outside its range.
pub fn loss_gradients(
    batch: &Batch<'_>,
    ctx_w: &ParamGenWeights,
    resp_w: &ParamGenWeights,
) -> Result<(NpairLoss, Gradients)> {
    let (loss, grads) = evaluate(batch, ctx_w, resp_w, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// Per-pair loss from a matrix of divergences, `kl[i][j] = KL(r_j || c_i)`.
pub fn npair_from_kl(kl: &[Vec<f64>]) -> NpairLoss {
    let per_pair: Vec<f64> = kl
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let neg: Vec<f64> = row.iter().map(|v| -v).collect();
            row[i] + log_sum_exp(&neg)
        })
        .collect();
    let loss = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    NpairLoss { loss, per_pair }
}

struct PairScore {
    kl: f64,
    /// Selected context component for each response component.
    matched: Vec<usize>,
}

fn score_pair(resp: &GenCache, ctx: &GenCache) -> PairScore {
    let d = resp.attention.dim;
    let (l_n, k_n) = (resp.attention.components, ctx.attention.components);
    let mut sum = 0.0;
    let mut matched = Vec::with_capacity(l_n);
    for l in 0..l_n {
        let (mu_r, lv_r) = (&resp.means[l * d..(l + 1) * d], &resp.log_vars[l * d..(l + 1) * d]);
        let mut best = (0, f64::INFINITY);
        for k in 0..k_n {
            let kl = component_kl(mu_r, lv_r, &ctx.means[k * d..(k + 1) * d], &ctx.log_vars[k * d..(k + 1) * d]);
            if kl < best.1 {
                best = (k, kl);
            }
        }
        sum += best.1;
        matched.push(best.0);
    }
    PairScore { kl: sum / l_n as f64 + (k_n as f64 / l_n as f64).ln(), matched }
}

fn evaluate(
    batch: &Batch<'_>,
    ctx_w: &ParamGenWeights,
    resp_w: &ParamGenWeights,
    want_grad: bool,
) -> Result<(NpairLoss, Option<Gradients>)> {
    let ctx: Vec<GenCache> = batch.pairs.iter().map(|(c, _)| forward(c, ctx_w)).collect::<Result<_>>()?;
    let resp: Vec<GenCache> = batch.pairs.iter().map(|(_, r)| forward(r, resp_w)).collect::<Result<_>>()?;
    let b = batch.len();
    let scores: Vec<Vec<PairScore>> = ctx
        .iter()
        .map(|c| resp.iter().map(|r| score_pair(r, c)).collect())
        .collect();
    let kl: Vec<Vec<f64>> = scores.iter().map(|row| row.iter().map(|s| s.kl).collect()).collect();
    let loss = npair_from_kl(&kl);
    if !want_grad {
        return Ok((loss, None));
    }

    let d = batch.dim();
    let mut d_ctx: Vec<(Vec<f64>, Vec<f64>)> = ctx.iter().map(|c| (vec![0.0; c.means.len()], vec![0.0; c.means.len()])).collect();
    let mut d_resp: Vec<(Vec<f64>, Vec<f64>)> = resp.iter().map(|r| (vec![0.0; r.means.len()], vec![0.0; r.means.len()])).collect();
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        let neg: Vec<f64> = kl[i].iter().map(|v| -v).collect();
        let lse = log_sum_exp(&neg);
        for j in 0..b {
            let p = (neg[j] - lse).exp();
            let g_kl = (if i == j { 1.0 } else { 0.0 } - p) * inv_b;
            let r = &resp[j];
            let c = &ctx[i];
            let g_comp = g_kl / r.attention.components as f64;
            for (l, &k) in scores[i][j].matched.iter().enumerate() {
                for t in 0..d {
                    let (rl, ck) = (l * d + t, k * d + t);
                    let diff = r.means[rl] - c.means[ck];
                    let inv_var_c = (-c.log_vars[ck]).exp();
                    let ratio = (r.log_vars[rl] - c.log_vars[ck]).exp();
                    let g_mu = g_comp * diff * inv_var_c;
                    d_resp[j].0[rl] += g_mu;
                    d_ctx[i].0[ck] -= g_mu;
                    d_resp[j].1[rl] += g_comp * 0.5 * (ratio - 1.0);
                    d_ctx[i].1[ck] += g_comp * 0.5 * (1.0 - ratio - diff * diff * inv_var_c);
                }
            }
        }
    }

    let mut grads = Gradients { ctx: ctx_w.zeros_like(), resp: resp_w.zeros_like() };
    for (idx, (c_tok, r_tok)) in batch.pairs.iter().enumerate() {
        backward(c_tok, ctx_w, &ctx[idx], &d_ctx[idx].0, &d_ctx[idx].1, &mut grads.ctx);
        backward(r_tok, resp_w, &resp[idx], &d_resp[idx].0, &d_resp[idx].1, &mut grads.resp);
    }
    Ok((loss, Some(grads)))
}
