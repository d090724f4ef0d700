use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use gmmret::corpus::{item_tokens, parse_kv, read_items, read_jsonl, write_jsonl, PairRecord};
use gmmret::eval::{
    bench_latency, corpus_bleu, diversity, recall_at_k, recall_percentage, reciprocal_rank, synth_corpus,
    DotRetriever, GmmIndexRetriever, GmmScanRetriever, LatencyReport, MaxSimRetriever, SynthConfig,
};
use gmmret::format::{read_gmms, write_store};
use gmmret::index::{build_index, load_index, save_index, IndexParams, QueryParams};
use gmmret::paramgen::{generate_gmm, tokenize};
use gmmret::training::{train as train_model, TrainConfig};
use gmmret::{GmmEmbedding, TokenMatrix};

use crate::model::{Model, DEFAULT_DIM, DEFAULT_HASH_SEED};
use crate::{
    Backend, BenchArgs, CliError, CliResult, EmbedArgs, EvalArgs, IndexBuildArgs, IndexQueryArgs, Metric, Side,
    SynthArgs, TrainArgs,
};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Prefixes data errors with the offending file.
fn in_file<T>(path: &Path, r: gmmret::Result<T>) -> CliResult<T> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn read_pairs(path: &Path) -> CliResult<Vec<PairRecord>> {
    in_file(path, read_jsonl(open(path)?))
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        topics: a.topics,
        contexts_per_topic: a.contexts_per_topic,
        responses_per_context: a.responses_per_context,
        subclusters: a.subclusters,
        facet_pool: a.facet_pool,
        noise: a.noise,
        generic_rate: a.generic_rate,
        seed: a.seed,
        ..Default::default()
    };
    let pairs = synth_corpus(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let records: Vec<PairRecord> = pairs.iter().map(|p| p.to_record()).collect();
    let mut out = BufWriter::new(File::create(&a.out)?);
    write_jsonl(&mut out, &records)?;
    out.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs, progress: bool) -> CliResult<()> {
    let mut cfg = TrainConfig::default();
    let (mut dim, mut hash_seed) = (DEFAULT_DIM, DEFAULT_HASH_SEED);
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for (k, v) in in_file(path, parse_kv(&text))? {
            let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
            match k.as_str() {
                "dim" => dim = v.parse().map_err(|_| bad(format!("dim: cannot parse {v:?}")))?,
                "hash_seed" => hash_seed = v.parse().map_err(|_| bad(format!("hash_seed: cannot parse {v:?}")))?,
                _ => {
                    if !cfg.set(&k, &v).map_err(|e| bad(e.to_string()))? {
                        return Err(bad(format!("unknown key {k:?}")));
                    }
                }
            }
        }
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if dim == 0 {
        return Err(CliError::Data("dim must be >= 1".into()));
    }
    let pairs = read_pairs(&a.pairs)?;
    let embedded = in_file(&a.pairs, gmmret::corpus::embed_pairs(&pairs, dim, hash_seed))?;
    if progress {
        eprintln!("training on {} pairs (d={dim}, K ctx={}, K resp={})", pairs.len(), cfg.k_ctx, cfg.k_resp);
    }
    let out = train_model(&embedded, &cfg)?;
    if progress {
        for r in &out.history {
            eprintln!("epoch {:>3}  train {:.5}  val {:.5}", r.epoch, r.train_loss, r.val_loss);
        }
        eprintln!("kept epoch {}", out.best_epoch);
    }
    let model = Model { dim, hash_seed, ctx: out.ctx.clone(), resp: out.resp.clone() };
    model.save(&a.out, &out.history_csv())
}

pub fn embed(a: EmbedArgs, progress: bool) -> CliResult<()> {
    let model = Model::load(&a.weights)?;
    let weights = model.weights(a.side);
    let inputs: Vec<(String, TokenMatrix)> = if a.from_pairs {
        read_pairs(&a.input)?
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let text = if a.side == Side::Ctx { &p.context } else { &p.response };
                let t = model.tokens(text).map_err(|e| line_err(&a.input, i, e))?;
                Ok((p.id, t))
            })
            .collect::<CliResult<_>>()?
    } else {
        in_file(&a.input, read_items(open(&a.input)?))?
            .into_iter()
            .enumerate()
            .map(|(i, item)| {
                let t = item_tokens(&item, model.dim, model.hash_seed).map_err(|e| line_err(&a.input, i, e.into()))?;
                Ok((item.id, t))
            })
            .collect::<CliResult<_>>()?
    };
    let mut records = Vec::with_capacity(inputs.len());
    for (i, (id, tokens)) in inputs.into_iter().enumerate() {
        records.push((id, generate_gmm(&tokens, weights)?));
        if progress && (i + 1) % 1000 == 0 {
            eprintln!("embedded {}", i + 1);
        }
    }
    write_store(&a.out, &records)?;
    if progress {
        eprintln!("wrote {} mixtures to {}", records.len(), a.out.display());
    }
    Ok(())
}

/// Data errors on the `i`-th record get a file and line prefix. Blank lines
/// are skipped by the readers, so `i` counts records.
fn line_err(path: &Path, i: usize, e: CliError) -> CliError {
    match e {
        CliError::Data(m) => CliError::Data(format!("{}: record {}: {m}", path.display(), i + 1)),
        other => other,
    }
}

pub fn index_build(a: IndexBuildArgs, progress: bool) -> CliResult<()> {
    let records = in_file(&a.gmms, read_gmms(&a.gmms))?;
    let params = IndexParams {
        cells: a.cells.map(|c| c as usize),
        n_probe: a.n_probe.map(|n| n as usize),
        kmeans_iters: a.kmeans_iters,
        seed: a.seed,
    };
    let index = build_index(&records, &params)?;
    save_index(&a.out, &index)?;
    if progress {
        eprintln!(
            "indexed {} responses ({} means) in {} cells, n_probe={}",
            index.len(),
            index.total_entries(),
            index.cells(),
            index.n_probe()
        );
    }
    Ok(())
}

pub fn index_query(a: IndexQueryArgs) -> CliResult<()> {
    let index = in_file(&a.index, load_index(&a.index))?;
    let ctx = match (&a.context, &a.context_gmm) {
        (Some(text), _) => {
            let dir = a.weights.as_ref().ok_or_else(|| CliError::Usage("--context needs --weights".into()))?;
            Model::load(dir)?.embed_text(text, Side::Ctx)?
        }
        (None, Some(path)) => {
            let mut g = in_file(path, read_gmms(path))?;
            g.swap_remove(0).1
        }
        (None, None) => return Err(CliError::Usage("one of --context or --context-gmm is required".into())),
    };
    let params = QueryParams {
        per_component_k: a.per_component_k as usize,
        top_m: a.top_m as usize,
        n_probe: a.n_probe.map(|n| n as usize),
    };
    let hits = index.query(&ctx, &params)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (rank, h) in hits.iter().enumerate() {
        writeln!(out, "{}\t{}\t{:.6}", rank + 1, h.id, h.score)?;
    }
    Ok(())
}

fn context_gmms(model: &Model, pairs: &[PairRecord], path: &Path) -> CliResult<Vec<GmmEmbedding>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| model.embed_text(&p.context, Side::Ctx).map_err(|e| line_err(path, i, e)))
        .collect()
}

pub fn eval(a: EvalArgs, progress: bool) -> CliResult<()> {
    let index = in_file(&a.index, load_index(&a.index))?;
    let model = Model::load(&a.weights)?;
    let pairs = read_pairs(&a.pairs)?;
    let resp_path = a.responses.as_ref().unwrap_or(&a.pairs);
    let resp_records = if a.responses.is_some() { read_pairs(resp_path)? } else { pairs.clone() };
    let texts: HashMap<&str, &str> = resp_records.iter().map(|p| (p.id.as_str(), p.response.as_str())).collect();

    let mut ks: Vec<usize> = a.k.iter().map(|&k| k as usize).collect();
    ks.sort_unstable();
    ks.dedup();
    let depth = ks.last().copied().unwrap_or(1).max(a.diversity_top as usize);
    let params = QueryParams { n_probe: a.n_probe.map(|n| n as usize), ..QueryParams::top(depth) };
    let contexts = context_gmms(&model, &pairs, &a.pairs)?;
    if progress {
        eprintln!("querying {} contexts (depth {depth})", contexts.len());
    }
    let results = index.query_batch(&contexts, &params)?;
    let rankings: Vec<Vec<String>> = results.into_iter().map(|r| r.into_iter().map(|c| c.id).collect()).collect();

    let text_of = |id: &str| -> CliResult<&str> {
        texts.get(id).copied().ok_or_else(|| CliError::Data(format!("no response text for id {id:?} in {}", resp_path.display())))
    };
    let mut rows: Vec<(String, f64)> = Vec::new();
    let mut metrics = a.metrics.clone();
    metrics.dedup();
    for m in metrics {
        match m {
            Metric::Recall => {
                for &k in &ks {
                    let hits: Vec<bool> = rankings.iter().zip(&pairs).map(|(r, p)| recall_at_k(r, &p.id, k)).collect();
                    rows.push((format!("recall@{k}"), recall_percentage(&hits)));
                }
            }
            Metric::Mrr => {
                let rr: f64 = rankings.iter().zip(&pairs).map(|(r, p)| reciprocal_rank(r, &p.id)).sum();
                rows.push(("mrr".into(), rr / pairs.len() as f64));
            }
            Metric::Bleu2 | Metric::Bleu4 => {
                let n = if m == Metric::Bleu2 { 2 } else { 4 };
                let mut cands = Vec::with_capacity(pairs.len());
                for (r, p) in rankings.iter().zip(&pairs) {
                    let cand = match r.first() {
                        Some(id) => tokenize(text_of(id)?),
                        None => Vec::new(),
                    };
                    cands.push((cand, tokenize(&p.response)));
                }
                rows.push((format!("bleu{n}"), corpus_bleu(&cands, n)));
            }
            Metric::Diversity => {
                let mut total = 0.0;
                for r in &rankings {
                    let vecs: Vec<Vec<f64>> = r
                        .iter()
                        .take(a.diversity_top as usize)
                        .map(|id| Ok(model.tokens(text_of(id)?)?.mean_pool()))
                        .collect::<CliResult<_>>()?;
                    if !vecs.is_empty() {
                        total += diversity(&vecs)?;
                    }
                }
                rows.push((format!("diversity@{}", a.diversity_top), total / rankings.len() as f64));
            }
        }
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{:<14} {:>12}", "metric", "value")?;
    for (name, v) in &rows {
        writeln!(out, "{name:<14} {v:>12.4}")?;
    }
    writeln!(out)?;
    writeln!(out, "metric,value")?;
    let csv: Vec<String> = rows.iter().map(|(n, v)| format!("{n},{v}")).collect();
    for line in &csv {
        writeln!(out, "{line}")?;
    }
    if let Some(path) = &a.csv {
        write_csv(path, "metric,value", &csv)?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs, progress: bool) -> CliResult<()> {
    let index = in_file(&a.index, load_index(&a.index))?;
    let model = Model::load(&a.weights)?;
    let pairs = read_pairs(&a.pairs)?;
    let n = a.queries as usize;
    let top = a.top_m as usize;
    let ctx_tokens: Vec<TokenMatrix> = pairs.iter().map(|p| model.tokens(&p.context)).collect::<CliResult<_>>()?;
    let mut seen = std::collections::HashSet::new();
    let resp_tokens: Vec<TokenMatrix> = pairs
        .iter()
        .filter(|p| seen.insert(p.id.as_str()))
        .map(|p| model.tokens(&p.response))
        .collect::<CliResult<_>>()?;

    let mut reports: Vec<LatencyReport> = Vec::new();
    let mut backends = a.backends.clone();
    backends.dedup();
    for b in backends {
        if progress {
            eprintln!("benchmarking {}", format!("{b:?}").to_lowercase());
        }
        let report = match b {
            Backend::Dot => {
                let r = DotRetriever { vectors: resp_tokens.iter().map(TokenMatrix::mean_pool).collect() };
                let q: Vec<Vec<f64>> = ctx_tokens.iter().map(TokenMatrix::mean_pool).collect();
                bench_latency(&r, &q, n, top, a.warmup, a.seed)?
            }
            Backend::Maxsim => {
                let r = MaxSimRetriever { docs: resp_tokens.clone() };
                bench_latency(&r, &ctx_tokens, n, top, a.warmup, a.seed)?
            }
            Backend::Index | Backend::Scan => {
                let q: Vec<GmmEmbedding> =
                    ctx_tokens.iter().map(|t| generate_gmm(t, &model.ctx)).collect::<gmmret::Result<_>>()?;
                if b == Backend::Index {
                    let r = GmmIndexRetriever { index: &index, params: QueryParams::top(top) };
                    bench_latency(&r, &q, n, top, a.warmup, a.seed)?
                } else {
                    bench_latency(&GmmScanRetriever { index: &index }, &q, n, top, a.warmup, a.seed)?
                }
            }
        };
        reports.push(report);
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{:<10} {:>8} {:>10} {:>10}", "backend", "queries", "mean_ms", "p95_ms")?;
    for r in &reports {
        writeln!(out, "{:<10} {:>8} {:>10.3} {:>10.3}", r.backend, r.queries, r.mean_ms, r.p95_ms)?;
    }
    let csv: Vec<String> = reports.iter().map(|r| format!("{},{},{},{}", r.backend, r.queries, r.mean_ms, r.p95_ms)).collect();
    writeln!(out)?;
    writeln!(out, "backend,queries,mean_ms,p95_ms")?;
    for line in &csv {
        writeln!(out, "{line}")?;
    }
    if let Some(path) = &a.csv {
        write_csv(path, "backend,queries,mean_ms,p95_ms", &csv)?;
    }
    Ok(())
}
