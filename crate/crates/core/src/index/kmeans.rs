use rand::Rng;

use crate::divergence::squared_l2;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Index of the nearest centroid under L2, lowest index on ties.
pub fn nearest_centroid(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let dist = squared_l2(point, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn kmeans_pp_init(data: &[f64], dim: usize, cells: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(cells * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_l2(point(i), point(first))).collect();
    while centroids.len() < cells * dim {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive mass")
        } else {
            // Remaining points all coincide with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centroids.extend_from_slice(point(next));
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(squared_l2(point(i), point(next)));
        }
    }
    centroids
}

/// Lloyd's k-means from a seeded k-means++ start, over `N x dim` row-major
/// data. Returns the `cells x dim` centroids.
///
/// An empty cell is re-seeded with the point farthest from its current
/// centroid. Stops early once assignments no longer change.
pub fn kmeans(data: &[f64], dim: usize, cells: usize, iters: usize, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidShape(format!("{} values do not form rows of {dim}", data.len())));
    }
    let n = data.len() / dim;
    if cells == 0 || n < cells {
        return Err(Error::InvalidArgument(format!("k-means needs N >= C >= 1, got N={n}, C={cells}")));
    }
    let mut rng = seeded_rng(seed);
    let mut centroids = kmeans_pp_init(data, dim, cells, &mut rng);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..iters {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest_centroid(&data[i * dim..(i + 1) * dim], &centroids, dim);
            dist[i] = d;
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; cells * dim];
        let mut counts = vec![0usize; cells];
        for i in 0..n {
            let c = assign[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                *s += v;
            }
        }
        for c in 0..cells {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .unwrap();
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
                dist[far] = 0.0;
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s * inv;
                }
            }
        }
    }
    Ok(centroids)
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn distortion(data: &[f64], dim: usize, centroids: &[f64]) -> f64 {
    data.chunks_exact(dim).map(|p| nearest_centroid(p, centroids, dim).1).sum()
}
