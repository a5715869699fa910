//! k-means++ seeding, Lloyd iterations, silhouette scoring and outlier-k selection.

use rayon::prelude::*;

use super::{sq_dist, ClusterError, Points};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub n_init: usize,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { n_init: 10, max_iter: 300, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k × dim`.
    pub centroids: Vec<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart; the last
    /// entry is the final assignment.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

/// Index of the closest centroid (lowest index on ties) and its squared distance.
pub fn nearest_centroid(row: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(points: Points<'_>, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    (0..points.len()).into_par_iter().map(|i| nearest_centroid(points.row(i), centroids, points.dim)).unzip()
}

fn kmeans_pp(points: Points<'_>, k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k * points.dim);
    centroids.extend_from_slice(points.row(rng.below(n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[..points.dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(points.row(pick));
        let c = centroids[start..].to_vec();
        d2.iter_mut().enumerate().for_each(|(i, d)| *d = d.min(sq_dist(points.row(i), &c)));
    }
    centroids
}

fn lloyd(points: Points<'_>, k: usize, rng: &mut SeededRng, opts: &KMeansOptions) -> KMeansResult {
    let (n, dim) = (points.len(), points.dim);
    let mut centroids = kmeans_pp(points, k, rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let (mut labels, mut dists) = assign_all(points, &centroids);
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        // An empty cluster takes over the point farthest from its centroid.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n).filter(|&i| counts[labels[i]] > 1).fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
            let Some(p) = far else { break };
            counts[labels[p]] -= 1;
            counts[j] = 1;
            labels[p] = j;
            dists[p] = 0.0;
            centroids[j * dim..(j + 1) * dim].copy_from_slice(points.row(p));
        }
        history.push(dists.iter().sum());

        let mut sums = vec![0.0; k * dim];
        for (i, &l) in labels.iter().enumerate() {
            sums[l * dim..(l + 1) * dim].iter_mut().zip(points.row(i)).for_each(|(s, v)| *s += v);
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[j * dim..(j + 1) * dim].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[j * dim..(j + 1) * dim]).sqrt());
            centroids[j * dim..(j + 1) * dim].copy_from_slice(&new);
        }
        if shift < opts.tolerance {
            break;
        }
    }
    let (labels, dists) = assign_all(points, &centroids);
    let inertia = dists.iter().sum();
    history.push(inertia);
    KMeansResult { k, dim, centroids, labels, inertia, inertia_history: history, iterations }
}

/// Best of `n_init` seeded k-means++/Lloyd restarts by inertia.
pub fn kmeans_fit_with(
    points: Points<'_>,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<KMeansResult, ClusterError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    let mut best: Option<KMeansResult> = None;
    for run in 0..opts.n_init.max(1) {
        let mut rng = SeededRng::fork(seed, run as u64);
        let res = lloyd(points, k, &mut rng, opts);
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans_fit(points: Points<'_>, k: usize, seed: u64) -> Result<KMeansResult, ClusterError> {
    kmeans_fit_with(points, k, seed, &KMeansOptions::default())
}

/// Mean silhouette with Euclidean distance. Singleton clusters score 0.
pub fn silhouette(points: Points<'_>, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = points.len();
    assert_eq!(labels.len(), n);
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 || ids.len() > n - 1 {
        return Err(ClusterError::DegenerateLabels(ids.len()));
    }
    let compact: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).unwrap()).collect();
    let m = ids.len();
    let mut sizes = vec![0usize; m];
    compact.iter().for_each(|&c| sizes[c] += 1);
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = compact[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; m];
            for j in 0..n {
                if j != i {
                    sums[compact[j]] += points.dist(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..m).filter(|&c| c != own).map(|c| sums[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Candidate set used when none is configured: `{2, …, min(50, n − 1)}`,
/// or `{1}` when that range is empty.
pub fn default_outlier_candidates(n_outliers: usize) -> Vec<usize> {
    let hi = 50.min(n_outliers.saturating_sub(1));
    if hi >= 2 {
        (2..=hi).collect()
    } else {
        vec![1]
    }
}

/// Picks the candidate `k` with the highest silhouette (smallest `k` on
/// ties). `k = 1` has no silhouette and is only chosen when nothing else
/// is usable. Returns the chosen `k` and the scores of the evaluated ones.
pub fn select_outlier_k(
    points: Points<'_>,
    candidates: &[usize],
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>), ClusterError> {
    let n = points.len();
    let mut cands: Vec<usize> = candidates.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    cands.sort_unstable();
    cands.dedup();
    if cands.is_empty() {
        return Err(ClusterError::InvalidParams(format!("no usable outlier k among {candidates:?} for {n} rows")));
    }
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &k in &cands {
        if k < 2 || k >= n {
            continue;
        }
        let fit = kmeans_fit(points, k, seed)?;
        let s = silhouette(points, &fit.labels).unwrap_or(-1.0);
        scores.push((k, s));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    Ok((best.map_or(cands[0], |(k, _)| k), scores))
}
