//! Token embedding and the mixture parameter generator.
//!
//! `K` seed vectors each attend over the token rows with a softmax of inner
//! products; the attended vectors go through two affine heads giving the
//! component means and (clamped) log-variances.

use crate::error::{check_dim, Error, Result};
use crate::rng::{mix_seed, seeded_rng, standard_normal};
use crate::types::{
    Affine, AttentionState, ComponentMode, GmmEmbedding, ParamGenWeights, TokenMatrix, LOGVAR_MAX,
    LOGVAR_MIN,
};

/// Lowercases and splits on every character that is not alphanumeric, so
/// whitespace and punctuation both separate tokens and are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic vector for one token: `N(0, 1/d)` entries drawn from a
/// stream keyed by the token's FNV-1a hash mixed with `seed`.
pub fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(mix_seed(fnv1a64(token.as_bytes()), seed));
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim).map(|_| standard_normal(&mut rng) * scale).collect()
}

/// Hashing stand-in for a contextual encoder: one row per token.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<TokenMatrix> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be >= 1".into()));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyTokens);
    }
    let mut data = Vec::with_capacity(tokens.len() * dim);
    for t in &tokens {
        data.extend(token_vector(t, dim, seed));
    }
    TokenMatrix::new(tokens.len(), dim, data)
}

/// Fresh generator weights.
///
/// Seeds are `N(0, 1/d)`; the mean head starts as the identity and the
/// log-variance head at zero, so an untrained generator emits unit-variance
/// components centred on the attended token vectors.
pub fn init_weights(mode: ComponentMode, dim: usize, use_bias: bool, seed: u64) -> Result<ParamGenWeights> {
    let mut rng = seeded_rng(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let seeds = (0..mode.seed_rows() * dim)
        .map(|_| standard_normal(&mut rng) * scale)
        .collect();
    let w = ParamGenWeights {
        mode,
        dim,
        seeds,
        map_mean: Affine::identity(dim),
        map_logvar: Affine::zero(dim),
        use_bias,
    };
    w.validate()?;
    Ok(w)
}

/// Softmax attention of every seed over the token rows.
pub fn attend(x: &TokenMatrix, weights: &ParamGenWeights) -> Result<AttentionState> {
    check_dim(weights.dim, x.dim())?;
    let (m, d) = (x.rows(), x.dim());
    let k = components_for(x, weights);
    let mut alpha = vec![0.0; m * k];
    match weights.mode {
        ComponentMode::PerToken => {
            for i in 0..m {
                alpha[i * k + i] = 1.0;
            }
        }
        ComponentMode::Fixed(_) => {
            let mut logits = vec![0.0; m];
            for c in 0..k {
                let seed = weights.seed(c);
                for (i, l) in logits.iter_mut().enumerate() {
                    *l = x.row(i).iter().zip(seed).map(|(a, b)| a * b).sum();
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    z += *l;
                }
                for (i, l) in logits.iter().enumerate() {
                    alpha[i * k + c] = l / z;
                }
            }
        }
    }
    let mut attended = vec![0.0; k * d];
    for c in 0..k {
        let out = &mut attended[c * d..(c + 1) * d];
        for i in 0..m {
            let a = alpha[i * k + c];
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += a * v;
            }
        }
    }
    Ok(AttentionState { tokens: m, components: k, dim: d, weights: alpha, attended })
}

fn components_for(x: &TokenMatrix, weights: &ParamGenWeights) -> usize {
    match weights.mode {
        ComponentMode::Fixed(k) => k,
        ComponentMode::PerToken => x.rows(),
    }
}

/// Intermediate values of one generator pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct GenCache {
    pub attention: AttentionState,
    /// Log-variance head output before clamping.
    pub raw_logvar: Vec<f64>,
    pub means: Vec<f64>,
    pub log_vars: Vec<f64>,
}

pub(crate) fn forward(x: &TokenMatrix, weights: &ParamGenWeights) -> Result<GenCache> {
    let attention = attend(x, weights)?;
    let (k, d) = (attention.components, attention.dim);
    let mut means = vec![0.0; k * d];
    let mut raw_logvar = vec![0.0; k * d];
    for c in 0..k {
        let a = attention.attended_row(c);
        weights.map_mean.apply(a, &mut means[c * d..(c + 1) * d]);
        weights.map_logvar.apply(a, &mut raw_logvar[c * d..(c + 1) * d]);
    }
    let log_vars = raw_logvar.iter().map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX)).collect();
    Ok(GenCache { attention, raw_logvar, means, log_vars })
}

impl GenCache {
    pub fn to_gmm(&self) -> Result<GmmEmbedding> {
        GmmEmbedding::new(
            self.attention.components,
            self.attention.dim,
            self.means.clone(),
            self.log_vars.clone(),
        )
    }
}

/// Maps a token matrix to its mixture: means `f1(a_k)`, log-variances
/// `clamp(f2(a_k))`.
pub fn generate_gmm(x: &TokenMatrix, weights: &ParamGenWeights) -> Result<GmmEmbedding> {
    forward(x, weights)?.to_gmm()
}

/// Accumulates into `grads` the gradient of a scalar loss given its gradient
/// with respect to the generated means and (clamped) log-variances.
///
/// The clamp passes gradient only where the raw head output lies inside
/// `[LOGVAR_MIN, LOGVAR_MAX]`.
pub(crate) fn backward(
    x: &TokenMatrix,
    weights: &ParamGenWeights,
    cache: &GenCache,
    d_means: &[f64],
    d_logvars: &[f64],
    grads: &mut ParamGenWeights,
) {
    let att = &cache.attention;
    let (m, k, d) = (att.tokens, att.components, att.dim);
    let mut d_raw = vec![0.0; d];
    let mut d_att = vec![0.0; d];
    for c in 0..k {
        let a = att.attended_row(c);
        let dm = &d_means[c * d..(c + 1) * d];
        for j in 0..d {
            let raw = cache.raw_logvar[c * d + j];
            d_raw[j] = if (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) { d_logvars[c * d + j] } else { 0.0 };
        }
        d_att.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..d {
            let (gm, gl) = (dm[j], d_raw[j]);
            if weights.use_bias {
                grads.map_mean.bias[j] += gm;
                grads.map_logvar.bias[j] += gl;
            }
            let wm = &weights.map_mean.weight[j * d..(j + 1) * d];
            let wl = &weights.map_logvar.weight[j * d..(j + 1) * d];
            let gwm = &mut grads.map_mean.weight[j * d..(j + 1) * d];
            for i in 0..d {
                gwm[i] += gm * a[i];
            }
            let gwl = &mut grads.map_logvar.weight[j * d..(j + 1) * d];
            for i in 0..d {
                gwl[i] += gl * a[i];
                d_att[i] += wm[i] * gm + wl[i] * gl;
            }
        }
        if let ComponentMode::Fixed(_) = weights.mode {
            // softmax over tokens: ds_i = alpha_i (dalpha_i - sum_j alpha_j dalpha_j)
            let mut weighted = 0.0;
            let mut d_alpha = vec![0.0; m];
            for (i, da) in d_alpha.iter_mut().enumerate() {
                *da = x.row(i).iter().zip(&d_att).map(|(a, b)| a * b).sum();
                weighted += att.weight(i, c) * *da;
            }
            let g_seed = &mut grads.seeds[c * d..(c + 1) * d];
            for (i, da) in d_alpha.iter().enumerate() {
                let ds = att.weight(i, c) * (da - weighted);
                for (g, v) in g_seed.iter_mut().zip(x.row(i)) {
                    *g += ds * v;
                }
            }
        }
    }
}
