//! Retrieval and generation metrics, a latency harness and a synthetic
//! topic-structured corpus.

mod bench;
mod bleu;
mod metrics;
mod synth;

pub use bench::{
    bench_latency, select_queries, DotRetriever, GmmIndexRetriever, GmmScanRetriever, LatencyReport, MaxSimRetriever,
    Retriever,
};
pub use bleu::{bleu, corpus_bleu, BLEU_EPSILON};
pub use metrics::{diversity, mean_reciprocal_rank, recall_at_k, recall_percentage, reciprocal_rank, spearman};
pub use synth::{synth_corpus, SynthConfig, SynthPair};
