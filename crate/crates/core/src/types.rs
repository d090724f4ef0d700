use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// Lower clamp applied to generated log-variances.
pub const LOGVAR_MIN: f64 = -10.0;
/// Upper clamp applied to generated log-variances.
pub const LOGVAR_MAX: f64 = 10.0;

/// An `m x d` matrix of token feature vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidShape(format!(
                "token matrix needs rows >= 1 and dim >= 1, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::InvalidShape(format!(
                "token matrix {rows}x{dim} needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        check_finite(&data, "token matrix")?;
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidShape("ragged token rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    /// Arithmetic mean of the token rows.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for row in self.iter_rows() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }
}

/// A `K`-component diagonal Gaussian mixture over `R^d` with equal weights `1/K`.
///
/// Means and log-variances are stored row-major, one row per component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmEmbedding {
    components: usize,
    dim: usize,
    means: Vec<f64>,
    log_vars: Vec<f64>,
}

impl GmmEmbedding {
    pub fn new(components: usize, dim: usize, means: Vec<f64>, log_vars: Vec<f64>) -> Result<Self> {
        if components == 0 || dim == 0 {
            return Err(Error::InvalidShape(format!(
                "mixture needs K >= 1 and d >= 1, got K={components}, d={dim}"
            )));
        }
        let n = components * dim;
        if means.len() != n || log_vars.len() != n {
            return Err(Error::InvalidShape(format!(
                "mixture K={components}, d={dim} needs {n} means and log-variances, got {} and {}",
                means.len(),
                log_vars.len()
            )));
        }
        check_finite(&means, "mixture means")?;
        check_finite(&log_vars, "mixture log-variances")?;
        if let Some(v) = log_vars.iter().find(|v| !(LOGVAR_MIN..=LOGVAR_MAX).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "log-variance {v} outside [{LOGVAR_MIN}, {LOGVAR_MAX}]"
            )));
        }
        Ok(Self { components, dim, means, log_vars })
    }

    /// Unit-variance mixture centred on the given rows.
    pub fn isotropic(means: &[Vec<f64>]) -> Result<Self> {
        let k = means.len();
        let d = means.first().map_or(0, Vec::len);
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidShape("ragged mean rows".into()));
        }
        Self::new(k, d, means.concat(), vec![0.0; k * d])
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn log_var(&self, k: usize) -> &[f64] {
        &self.log_vars[k * self.dim..(k + 1) * self.dim]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn log_vars(&self) -> &[f64] {
        &self.log_vars
    }

    /// Rounds every parameter to the nearest `f32`, the on-disk precision.
    pub fn to_storage_precision(&self) -> Self {
        let round = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            components: self.components,
            dim: self.dim,
            means: round(&self.means),
            log_vars: round(&self.log_vars),
        }
    }

    pub fn is_storage_exact(&self) -> bool {
        self.means.iter().chain(&self.log_vars).all(|&x| x as f32 as f64 == x)
    }

    /// Mean over component means, used as a single-vector summary.
    pub fn pooled_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for row in self.means.chunks_exact(self.dim) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / self.components as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }
}

/// How many mixture components the generator emits per input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentMode {
    /// `K` trainable seed embeddings attend over the tokens.
    Fixed(usize),
    /// One component per token (`K = m`); seeds are bypassed and token `k`
    /// feeds component `k` directly.
    PerToken,
}

impl ComponentMode {
    pub fn seed_rows(self) -> usize {
        match self {
            ComponentMode::Fixed(k) => k,
            ComponentMode::PerToken => 0,
        }
    }
}

impl std::fmt::Display for ComponentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ComponentMode::Fixed(k) => write!(f, "{k}"),
            ComponentMode::PerToken => f.write_str("all"),
        }
    }
}

impl std::str::FromStr for ComponentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(ComponentMode::PerToken),
            other => match other.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(ComponentMode::Fixed(k)),
                _ => Err(Error::InvalidArgument(format!("component count {other:?}"))),
            },
        }
    }
}

/// Affine map `R^d -> R^d`, weight stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self { weight, bias: vec![0.0; dim] }
    }

    pub fn zero(dim: usize) -> Self {
        Self { weight: vec![0.0; dim * dim], bias: vec![0.0; dim] }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let dim = x.len();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.weight[j * dim..(j + 1) * dim];
            *o = self.bias[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Trainable state of one parameter generator: seed embeddings plus the mean
/// and log-variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGenWeights {
    pub mode: ComponentMode,
    pub dim: usize,
    /// `K x d`, empty in [`ComponentMode::PerToken`].
    pub seeds: Vec<f64>,
    pub map_mean: Affine,
    pub map_logvar: Affine,
    /// When false the biases stay at zero and receive no updates.
    pub use_bias: bool,
}

impl ParamGenWeights {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::InvalidShape("generator dim must be >= 1".into()));
        }
        if let ComponentMode::Fixed(0) = self.mode {
            return Err(Error::InvalidShape("generator needs K >= 1".into()));
        }
        if self.seeds.len() != self.mode.seed_rows() * d {
            return Err(Error::InvalidShape(format!(
                "seed matrix has {} values, expected {}x{d}",
                self.seeds.len(),
                self.mode.seed_rows()
            )));
        }
        for map in [&self.map_mean, &self.map_logvar] {
            if map.weight.len() != d * d || map.bias.len() != d {
                return Err(Error::InvalidShape("affine head shape".into()));
            }
        }
        check_finite(&self.seeds, "seeds")?;
        check_finite(&self.map_mean.weight, "mean head")?;
        check_finite(&self.map_mean.bias, "mean head")?;
        check_finite(&self.map_logvar.weight, "log-variance head")?;
        check_finite(&self.map_logvar.bias, "log-variance head")?;
        Ok(())
    }

    pub fn seed(&self, k: usize) -> &[f64] {
        &self.seeds[k * self.dim..(k + 1) * self.dim]
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            mode: self.mode,
            dim: self.dim,
            seeds: vec![0.0; self.seeds.len()],
            map_mean: Affine::zero(self.dim),
            map_logvar: Affine::zero(self.dim),
            use_bias: self.use_bias,
        }
    }

    /// Trainable tensors in a fixed order: seeds, mean weight, mean bias,
    /// log-variance weight, log-variance bias.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            &self.seeds,
            &self.map_mean.weight,
            &self.map_mean.bias,
            &self.map_logvar.weight,
            &self.map_logvar.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.seeds,
            &mut self.map_mean.weight,
            &mut self.map_mean.bias,
            &mut self.map_logvar.weight,
            &mut self.map_logvar.bias,
        ]
    }

    /// Number of trainable scalars.
    pub fn num_params(&self) -> usize {
        self.seeds.len() + 2 * (self.dim * self.dim + self.dim)
    }
}

/// Attention weights (`m x K`, row-major) and attended vectors (`K x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub tokens: usize,
    pub components: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub attended: Vec<f64>,
}

impl AttentionState {
    pub fn weight(&self, token: usize, component: usize) -> f64 {
        self.weights[token * self.components + component]
    }

    pub fn attended_row(&self, k: usize) -> &[f64] {
        &self.attended[k * self.dim..(k + 1) * self.dim]
    }
}

/// One corpus record: raw text, precomputed token vectors, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Vec<f64>>>,
}

impl CorpusItem {
    pub fn validate(&self) -> Result<()> {
        if self.text.is_none() && self.tokens.is_none() {
            return Err(Error::InvalidArgument(format!(
                "item {:?} has neither text nor tokens",
                self.id
            )));
        }
        Ok(())
    }

    pub fn token_matrix(&self) -> Option<Result<TokenMatrix>> {
        self.tokens.as_deref().map(TokenMatrix::from_rows)
    }
}
