use rand::seq::SliceRandom;

use super::loss::{loss_gradients, npair_loss, Batch};
use super::optim::AdamW;
use crate::error::{Error, Result};
use crate::paramgen::init_weights;
use crate::rng::{mix_seed, seeded_rng};
use crate::types::{ComponentMode, ParamGenWeights, TokenMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k_ctx: ComponentMode,
    pub k_resp: ComponentMode,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub val_fraction: f64,
    pub use_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k_ctx: ComponentMode::Fixed(4),
            k_resp: ComponentMode::Fixed(4),
            lr: 1.5e-5,
            batch_size: 16,
            max_epochs: 50,
            patience: 3,
            seed: 0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_fraction: 0.1,
            use_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.patience < 1 {
            return bad("patience must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "k_ctx" => self.k_ctx = value.parse()?,
            "k_resp" => self.k_resp = value.parse()?,
            "lr" => self.lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            "use_bias" => self.use_bias = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub ctx: ParamGenWeights,
    pub resp: ParamGenWeights,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.history {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
        }
        out
    }
}

/// Splits `n` items into chunks of `size`, folding a trailing singleton into
/// the previous chunk so every batch has at least two pairs.
fn chunk_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        out.push((start, end));
        start = end;
    }
    if out.len() > 1 && out.last().is_some_and(|(s, e)| e - s < 2) {
        let (_, e) = out.pop().unwrap();
        out.last_mut().unwrap().1 = e;
    }
    out
}

fn mean_loss(
    pairs: &[(TokenMatrix, TokenMatrix)],
    order: &[usize],
    batch_size: usize,
    ctx: &ParamGenWeights,
    resp: &ParamGenWeights,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for (s, e) in chunk_bounds(order.len(), batch_size) {
        let batch = Batch::new(order[s..e].iter().map(|&i| (&pairs[i].0, &pairs[i].1)).collect())?;
        total += npair_loss(&batch, ctx, resp)?.loss;
        count += 1;
    }
    Ok(total / count as f64)
}

/// AdamW over shuffled in-batch-negative batches with early stopping on the
/// validation loss.
///
/// The validation split is a seeded shuffle; every later random choice
/// derives from `config.seed`, so a fixed config reproduces the loss history
/// bit for bit.
pub fn train(pairs: &[(TokenMatrix, TokenMatrix)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = pairs[0].0.dim();
    let n = pairs.len();
    let n_val = if config.val_fraction == 0.0 {
        0
    } else {
        ((n as f64 * config.val_fraction).round() as usize).max(2)
    };
    if n < n_val + 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} pairs for a {} / 2 validation / training split, got {n}",
            n_val + 2,
            n_val
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(mix_seed(config.seed, 1)));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut ctx = init_weights(config.k_ctx, dim, config.use_bias, mix_seed(config.seed, 2))?;
    let mut resp = init_weights(config.k_resp, dim, config.use_bias, mix_seed(config.seed, 3))?;
    let adam = || AdamW::new(config.lr, config.beta1, config.beta2, config.eps, config.weight_decay);
    let (mut opt_ctx, mut opt_resp) = (adam(), adam());
    let mut shuffle_rng = seeded_rng(mix_seed(config.seed, 4));

    let eval_val = |c: &ParamGenWeights, r: &ParamGenWeights| -> Result<f64> {
        if val_idx.is_empty() {
            Ok(f64::NAN)
        } else {
            mean_loss(pairs, val_idx, config.batch_size, c, r)
        }
    };

    let initial_val = eval_val(&ctx, &resp)?;
    let initial_train = mean_loss(pairs, &train_idx, config.batch_size, &ctx, &resp)?;
    let mut history = vec![EpochRecord { epoch: 0, train_loss: initial_train, val_loss: initial_val }];
    let mut best = (initial_val, 0, ctx.clone(), resp.clone());
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let bounds = chunk_bounds(train_idx.len(), config.batch_size);
        for &(s, e) in &bounds {
            let batch = Batch::new(train_idx[s..e].iter().map(|&i| (&pairs[i].0, &pairs[i].1)).collect())?;
            let (loss, grads) = loss_gradients(&batch, &ctx, &resp)?;
            opt_ctx.update(&mut ctx, &grads.ctx);
            opt_resp.update(&mut resp, &grads.resp);
            total += loss.loss;
        }
        let train_loss = total / bounds.len() as f64;
        let val_loss = eval_val(&ctx, &resp)?;
        history.push(EpochRecord { epoch, train_loss, val_loss });
        if !train_loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }

        // Without a validation split every epoch counts as an improvement.
        if val_loss.is_nan() || val_loss < best.0 {
            best = (val_loss, epoch, ctx.clone(), resp.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, ctx, resp) = best;
    Ok(TrainOutcome { ctx, resp, history, best_epoch })
}
