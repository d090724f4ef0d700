//! A trained model directory: `ctx.gmw`, `resp.gmw`, `model.cfg` (`dim`,
//! `hash_seed`) and `loss.csv`.

use std::fs;
use std::path::Path;

use gmmret::corpus::parse_kv;
use gmmret::format::{load_weights, save_weights};
use gmmret::paramgen::{generate_gmm, hash_embed};
use gmmret::{GmmEmbedding, ParamGenWeights, TokenMatrix};

use crate::{CliError, CliResult, Side};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_HASH_SEED: u64 = 0;

pub struct Model {
    pub dim: usize,
    pub hash_seed: u64,
    pub ctx: ParamGenWeights,
    pub resp: ParamGenWeights,
}

impl Model {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let cfg_path = dir.join("model.cfg");
        let text = fs::read_to_string(&cfg_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", cfg_path.display())))?;
        let (mut dim, mut hash_seed) = (None, None);
        for (k, v) in parse_kv(&text)? {
            let bad = || CliError::Data(format!("{}: bad value for {k}: {v:?}", cfg_path.display()));
            match k.as_str() {
                "dim" => dim = Some(v.parse().map_err(|_| bad())?),
                "hash_seed" => hash_seed = Some(v.parse().map_err(|_| bad())?),
                _ => {}
            }
        }
        let ctx = load_weights(&dir.join("ctx.gmw"))?;
        let resp = load_weights(&dir.join("resp.gmw"))?;
        let dim = dim.ok_or_else(|| CliError::Data(format!("{}: missing dim", cfg_path.display())))?;
        if ctx.dim != dim || resp.dim != dim {
            return Err(CliError::Data(format!("weights do not match dim={dim} in {}", cfg_path.display())));
        }
        Ok(Self { dim, hash_seed: hash_seed.unwrap_or(DEFAULT_HASH_SEED), ctx, resp })
    }

    pub fn save(&self, dir: &Path, loss_csv: &str) -> CliResult<()> {
        fs::create_dir_all(dir)?;
        save_weights(&dir.join("ctx.gmw"), &self.ctx)?;
        save_weights(&dir.join("resp.gmw"), &self.resp)?;
        fs::write(dir.join("model.cfg"), format!("dim={}\nhash_seed={}\n", self.dim, self.hash_seed))?;
        fs::write(dir.join("loss.csv"), loss_csv)?;
        Ok(())
    }

    pub fn weights(&self, side: Side) -> &ParamGenWeights {
        match side {
            Side::Ctx => &self.ctx,
            Side::Resp => &self.resp,
        }
    }

    pub fn tokens(&self, text: &str) -> CliResult<TokenMatrix> {
        Ok(hash_embed(text, self.dim, self.hash_seed)?)
    }

    pub fn embed_text(&self, text: &str, side: Side) -> CliResult<GmmEmbedding> {
        Ok(generate_gmm(&self.tokens(text)?, self.weights(side))?)
    }
}
