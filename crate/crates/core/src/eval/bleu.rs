use std::collections::HashMap;

/// Stand-in numerator for an n-gram order with no matches (or no n-grams),
/// so the geometric mean stays defined.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus-level BLEU-`max_n` with clipped counts, uniform weights and a
/// brevity penalty over summed lengths. Zero match counts are replaced by
/// [`BLEU_EPSILON`]. Returns 0 when every candidate is empty.
pub fn corpus_bleu<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)], max_n: usize) -> f64 {
    assert!(max_n >= 1, "max_n must be >= 1");
    let cand_len: usize = pairs.iter().map(|(c, _)| c.len()).sum();
    let ref_len: usize = pairs.iter().map(|(_, r)| r.len()).sum();
    if cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (c, r) in pairs {
            let rc = ngrams(r, n);
            for (g, cnt) in ngrams(c, n) {
                matched += cnt.min(rc.get(&g).copied().unwrap_or(0));
                total += cnt;
            }
        }
        let num = if matched == 0 { BLEU_EPSILON } else { matched as f64 };
        log_sum += (num / total.max(1) as f64).ln();
    }
    let bp = if cand_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / cand_len as f64).exp() };
    bp * (log_sum / max_n as f64).exp()
}

/// Sentence-level BLEU: [`corpus_bleu`] over a single pair.
pub fn bleu<S: AsRef<str> + Clone>(candidate: &[S], reference: &[S], max_n: usize) -> f64 {
    corpus_bleu(&[(candidate.to_vec(), reference.to_vec())], max_n)
}
