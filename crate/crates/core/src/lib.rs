//! Sequences embedded as equal-weight diagonal Gaussian mixtures, trained
//! contrastively and retrieved by a closed-form approximate KL divergence.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`], [`rng`], [`format`], [`corpus`]: shared domain types, the
//!   deterministic random stream, binary containers and text inputs.
//! * [`divergence`]: per-component KL, the min-matching mixture approximation,
//!   a Monte-Carlo oracle and the late-interaction / single-vector scorers.
//! * [`paramgen`]: hashing token embedder and the seed-attention parameter
//!   generator that turns a token matrix into a mixture.
//! * [`training`]: N-pair contrastive loss, analytic gradients and an AdamW loop.
//! * [`index`]: k-means coarse quantizer and the inverted file over component
//!   means with exact re-ranking.
//! * [`eval`]: Recall@k, MRR, BLEU, diversity, latency and a synthetic corpus.

pub mod corpus;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod format;
pub mod index;
pub mod paramgen;
pub mod rng;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    AttentionState, ComponentMode, CorpusItem, GmmEmbedding, ParamGenWeights, TokenMatrix,
    LOGVAR_MAX, LOGVAR_MIN,
};
