use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::PairRecord;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Shape of the synthetic corpus.
///
/// Each topic owns `subclusters` facets. With `facet_pool = 0` facets are
/// private to their topic; otherwise every topic draws its facets from a
/// shared pool of that size, so one facet (and its responses) is valid for
/// several unrelated topics. A context carries its topic word and every facet
/// keyword of its topic, shuffled, and is paired with responses from
/// `responses_per_context` distinct facets. A response carries its facet
/// keyword plus a facet-specific word. Each of the `filler_slots` on either
/// side is filled with a random vocabulary word with probability `noise`.
///
/// With probability `generic_rate` a context also gets one generic reply,
/// drawn from `generic_pool` topic-free responses that are valid anywhere.
/// Generic replies carry facet id `usize::MAX - g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    pub contexts_per_topic: usize,
    pub responses_per_context: usize,
    pub subclusters: usize,
    pub facet_pool: usize,
    pub noise: f64,
    pub generic_rate: f64,
    pub generic_pool: usize,
    pub filler_slots: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 20,
            contexts_per_topic: 10,
            responses_per_context: 2,
            subclusters: 4,
            facet_pool: 0,
            noise: 0.3,
            generic_rate: 0.0,
            generic_pool: 5,
            filler_slots: 3,
            filler_vocab: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    /// Unique per pair; also the response id.
    pub id: String,
    pub context_id: String,
    pub context: String,
    pub response: String,
    pub topic: usize,
    /// Global facet id.
    pub subcluster: usize,
    /// Topic the response text was generated from. Always equals `topic`;
    /// kept separate so label audits compare two independent fields.
    pub response_topic: usize,
}

impl SynthPair {
    pub fn to_record(&self) -> PairRecord {
        PairRecord {
            id: self.id.clone(),
            context: self.context.clone(),
            response: self.response.clone(),
            topic: Some(self.topic),
            subcluster: Some(self.subcluster),
        }
    }
}

fn fillers(rng: &mut impl Rng, cfg: &SynthConfig, words: &mut Vec<String>) {
    for _ in 0..cfg.filler_slots {
        if cfg.noise > 0.0 && rng.random::<f64>() < cfg.noise {
            words.push(format!("w{}", rng.random_range(0..cfg.filler_vocab)));
        }
    }
}

/// Generates `topics * contexts_per_topic * responses_per_context` pairs,
/// deterministically in `seed`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<SynthPair>> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    if cfg.topics == 0 || cfg.contexts_per_topic == 0 || cfg.subclusters == 0 {
        return bad("topics, contexts_per_topic and subclusters must be >= 1".into());
    }
    if cfg.responses_per_context == 0 || cfg.responses_per_context > cfg.subclusters {
        return bad(format!("responses_per_context must be in 1..={}", cfg.subclusters));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return bad(format!("noise must be in [0, 1], got {}", cfg.noise));
    }
    if cfg.facet_pool != 0 && cfg.facet_pool < cfg.subclusters {
        return bad(format!("facet_pool must be 0 or >= {}", cfg.subclusters));
    }
    if !(0.0..=1.0).contains(&cfg.generic_rate) || (cfg.generic_rate > 0.0 && cfg.generic_pool == 0) {
        return bad("generic_rate must be in [0, 1] with generic_pool >= 1".into());
    }
    if cfg.noise > 0.0 && cfg.filler_vocab == 0 {
        return bad("filler_vocab must be >= 1 when noise > 0".into());
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut out = Vec::new();
    for t in 0..cfg.topics {
        let facets: Vec<usize> = if cfg.facet_pool == 0 {
            (t * cfg.subclusters..(t + 1) * cfg.subclusters).collect()
        } else {
            sample(&mut rng, cfg.facet_pool, cfg.subclusters).into_vec()
        };
        for c in 0..cfg.contexts_per_topic {
            let context_id = format!("c{t}_{c}");
            let mut words: Vec<String> = facets.iter().map(|f| format!("k{f}")).collect();
            words.push(format!("t{t}"));
            fillers(&mut rng, cfg, &mut words);
            words.shuffle(&mut rng);
            let context = words.join(" ");
            let mut chosen = facets.clone();
            chosen.shuffle(&mut rng);
            for &f in &chosen[..cfg.responses_per_context] {
                let mut words = vec![format!("k{f}"), format!("r{f}")];
                fillers(&mut rng, cfg, &mut words);
                words.shuffle(&mut rng);
                out.push(SynthPair {
                    id: format!("r{}", out.len()),
                    context_id: context_id.clone(),
                    context: context.clone(),
                    response: words.join(" "),
                    topic: t,
                    subcluster: f,
                    response_topic: t,
                });
            }
            if cfg.generic_rate > 0.0 && rng.random::<f64>() < cfg.generic_rate {
                let g = rng.random_range(0..cfg.generic_pool);
                let mut words = vec![format!("g{g}"), "ok".to_string()];
                fillers(&mut rng, cfg, &mut words);
                words.shuffle(&mut rng);
                out.push(SynthPair {
                    id: format!("r{}", out.len()),
                    context_id: context_id.clone(),
                    context: context.clone(),
                    response: words.join(" "),
                    topic: t,
                    subcluster: usize::MAX - g,
                    response_topic: t,
                });
            }
        }
    }
    Ok(out)
}
