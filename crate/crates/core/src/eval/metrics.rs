use crate::divergence::squared_l2;
use crate::error::{Error, Result};

/// Whether `truth` appears in the first `k` entries of `ranked`.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], truth: &str, k: usize) -> bool {
    ranked.iter().take(k).any(|r| r.as_ref() == truth)
}

/// Percentage of hits, 0 for an empty slice.
pub fn recall_percentage(hits: &[bool]) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    100.0 * hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

/// `1 / rank` of `truth` (1-based), 0 when absent.
pub fn reciprocal_rank<S: AsRef<str>>(ranked: &[S], truth: &str) -> f64 {
    ranked.iter().position(|r| r.as_ref() == truth).map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

pub fn mean_reciprocal_rank<S: AsRef<str>>(rankings: &[(Vec<S>, String)]) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    rankings.iter().map(|(r, t)| reciprocal_rank(r, t)).sum::<f64>() / rankings.len() as f64
}

/// Mean pairwise squared distance over all ordered pairs, self-pairs
/// included: `(1/|R|^2) sum_i sum_j ||r_i - r_j||^2`.
pub fn diversity(vectors: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidArgument("diversity of an empty set".into()));
    };
    for v in vectors {
        crate::error::check_dim(first.len(), v.len())?;
    }
    let mut total = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for b in &vectors[i + 1..] {
            total += 2.0 * squared_l2(a, b);
        }
    }
    let n = vectors.len() as f64;
    Ok(total / (n * n))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!("spearman needs two equal series of length >= 2, got {} and {}", a.len(), b.len())));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::InvalidArgument("spearman of a constant series".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_and_rr() {
        let ranked = ["a", "b", "c"];
        assert!(recall_at_k(&ranked, "b", 2));
        assert!(!recall_at_k(&ranked, "c", 2));
        assert_eq!(reciprocal_rank(&ranked, "c"), 1.0 / 3.0);
        assert_eq!(reciprocal_rank(&ranked, "z"), 0.0);
        assert_eq!(recall_percentage(&[true, false, true, true]), 75.0);
        let mrr = mean_reciprocal_rank(&[(vec!["a", "b"], "b".to_string()), (vec!["a"], "a".to_string())]);
        assert_eq!(mrr, 0.75);
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(), 0.0);
        // two points at squared distance 4: (0 + 4 + 4 + 0) / 4
        assert_eq!(diversity(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap(), 2.0);
        assert!(diversity(&[]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
