//! Lloyd's k-means with k-means++ seeding.
//!
//! The generator is ChaCha8 seeded from a `u64`, so results replay exactly
//! from `(matrix, k, seed, max_iter, tol)`. All sums run in ascending row
//! index, then ascending column index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterError, EncodingEntry, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative SSE improvement of an iteration is at most this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 3,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub sse: f64,
    pub iterations: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// SSE after each iteration; non-increasing.
    pub sse_history: Vec<f64>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// JSON export: `k, seed, sse, iterations, centroids, assignment,
    /// encoding_report` plus the stopping parameters.
    pub fn export(&self, encoding: &[EncodingEntry]) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "seed": self.seed,
            "sse": self.sse,
            "iterations": self.iterations,
            "centroids": self.centroids,
            "assignment": self.assignment,
            "encoding_report": encoding,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "sse_history": self.sse_history,
        })
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn init_plus_plus(m: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = m.n_rows();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(m.row(rng.random_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(m.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..n)
        };
        let c = m.row(pick).to_vec();
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(dist2(m.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn means(m: &FeatureMatrix, assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = m.n_cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(m.row(i)) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    sums
}

/// Moves, for each empty cluster in ascending order, the point farthest from
/// its centroid (lowest index on ties) out of a cluster that can spare it.
fn repair_empty(m: &FeatureMatrix, assignment: &mut [usize], dists: &mut [f64], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            if best.is_none_or(|(_, d)| dists[i] > d) {
                best = Some((i, dists[i]));
            }
        }
        let Some((i, _)) = best else { break };
        sizes[assignment[i]] -= 1;
        sizes[empty] += 1;
        assignment[i] = empty;
        dists[i] = 0.0;
        centroids[empty] = m.row(i).to_vec();
    }
}

/// Clusters the rows of `m` into `k` groups.
pub fn kmeans(m: &FeatureMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Clustering, ClusterError> {
    let n = m.n_rows();
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    if max_iter < 1 {
        return Err(ClusterError::InvalidMaxIter);
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(ClusterError::InvalidTolerance(tol));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(m, k, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history: Vec<f64> = Vec::new();

    for _ in 0..max_iter {
        for i in 0..n {
            let (j, d) = nearest(m.row(i), &centroids);
            assignment[i] = j;
            dists[i] = d;
        }
        repair_empty(m, &mut assignment, &mut dists, &mut centroids);
        centroids = means(m, &assignment, k);
        let sse: f64 = (0..n).map(|i| dist2(m.row(i), &centroids[assignment[i]])).sum();
        let prev = history.last().copied();
        history.push(sse);
        if sse == 0.0 {
            break;
        }
        if let Some(prev) = prev {
            if prev - sse <= tol * prev {
                break;
            }
        }
    }

    Ok(Clustering {
        k,
        seed,
        max_iter,
        tol,
        sse: *history.last().expect("at least one iteration"),
        iterations: history.len(),
        centroids,
        assignment,
        sse_history: history,
    })
}
