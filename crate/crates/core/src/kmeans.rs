//! Lloyd's k-means with k-means++ seeding and parallel restarts.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, SscError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub n_clusters: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Row-major `n_clusters × dim`.
    pub centroids: Vec<f64>,
    pub restart: usize,
    pub iterations: usize,
}

struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Points<'_> {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the rows of `points`. The best restart by inertia wins; ties go
/// to the lowest restart index.
pub fn kmeans(points: &DMatrix<f64>, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let (n, dim) = points.shape();
    if cfg.n_clusters == 0 || cfg.n_clusters > n {
        return Err(SscError::Contract(format!(
            "cannot form {} clusters from {n} points",
            cfg.n_clusters
        )));
    }
    if cfg.restarts == 0 || cfg.max_iters == 0 {
        return Err(SscError::Contract(
            "k-means needs at least one restart and one iteration".into(),
        ));
    }
    if dim == 0 {
        return Err(SscError::Contract("points have no coordinates".into()));
    }
    let row_major: Vec<f64> = points.transpose().as_slice().to_vec();
    let pts = Points {
        data: &row_major,
        dim,
    };

    let fits: Vec<KMeansFit> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::stream_rng(cfg.rng_seed, r as u64);
            let mut fit = lloyd(&pts, cfg, &mut rng);
            fit.restart = r;
            fit
        })
        .collect();

    let mut best = None::<KMeansFit>;
    for fit in fits {
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(pts: &Points, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = pts.len();
    let mut centroids = Vec::with_capacity(k * pts.dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(pts.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(pts.row(i), pts.row(first))).collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
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
            rng.random_range(0..n)
        };
        let c = pts.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(pts: &Points, cfg: &KMeansConfig, rng: &mut impl Rng) -> KMeansFit {
    let (n, dim, k) = (pts.len(), pts.dim, cfg.n_clusters);
    let mut centroids = plus_plus(pts, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(pts.row(i), &centroids, dim);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }

        // An emptied cluster takes the point farthest from its own centroid.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None::<usize>, |best, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = donor {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                dists[i] = 0.0;
                changed = true;
            }
        }

        if !changed {
            break;
        }
        centroids.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let cen = &mut centroids[labels[i] * dim..(labels[i] + 1) * dim];
            for (c, p) in cen.iter_mut().zip(pts.row(i)) {
                *c += p;
            }
        }
        for (c, cen) in centroids.chunks_exact_mut(dim).enumerate() {
            let m = counts[c].max(1) as f64;
            cen.iter_mut().for_each(|v| *v /= m);
        }
    }

    let inertia = (0..n)
        .map(|i| sq_dist(pts.row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    KMeansFit {
        labels,
        inertia,
        centroids,
        restart: 0,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> DMatrix<f64> {
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut rows = Vec::new();
        for (cx, cy) in centers {
            for k in 0..10 {
                let t = k as f64 * 0.6;
                rows.push(cx + 0.3 * t.cos());
                rows.push(cy + 0.3 * t.sin());
            }
        }
        DMatrix::from_row_slice(30, 2, &rows)
    }

    fn cfg(seed: u64) -> KMeansConfig {
        KMeansConfig {
            n_clusters: 3,
            restarts: 5,
            max_iters: 100,
            rng_seed: seed,
        }
    }

    #[test]
    fn separates_blobs() {
        let fit = kmeans(&blobs(), &cfg(1)).unwrap();
        for block in fit.labels.chunks(10) {
            assert!(block.iter().all(|&l| l == block[0]));
        }
        let mut firsts: Vec<usize> = fit.labels.chunks(10).map(|b| b[0]).collect();
        firsts.sort();
        assert_eq!(firsts, vec![0, 1, 2]);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = kmeans(&blobs(), &cfg(9)).unwrap();
        let b = kmeans(&blobs(), &cfg(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_empty_clusters_with_duplicates() {
        // Only two distinct points but three clusters requested.
        let pts = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 1.0]);
        let fit = kmeans(&pts, &KMeansConfig { n_clusters: 3, ..cfg(3) }).unwrap();
        let mut used = fit.labels.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn rejects_too_many_clusters() {
        let pts = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(kmeans(&pts, &cfg(0)).is_err());
    }
}
