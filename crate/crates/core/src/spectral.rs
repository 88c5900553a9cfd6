//! Affinity construction and normalized spectral clustering.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Labels;
use crate::error::{Result, SscError};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::omp::CoefMatrix;

/// Symmetric, nonnegative, zero-diagonal sparse matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AffinityMatrix {
    /// Builds from upper- or lower-triangle entries `(i, j, w)`; each pair
    /// is mirrored. Zero weights are dropped.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in pairs {
            if i >= n || j >= n {
                return Err(SscError::Shape(format!("edge ({i}, {j}) outside {n} vertices")));
            }
            if i == j {
                return Err(SscError::Contract(format!("self-loop at {i}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(SscError::Contract(format!("edge ({i}, {j}) has weight {w}")));
            }
            *acc.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }
        Ok(Self::from_upper(n, acc))
    }

    fn from_upper(n: usize, upper: BTreeMap<(usize, usize), f64>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for ((i, j), w) in upper {
            if w != 0.0 {
                rows[i].push((j, w));
                rows[j].push((i, w));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
        }
        Self { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored nonzeros, counting both triangles.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |k| row[k].1)
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Subgraph on `vertices`, re-indexed in the given order.
    pub fn induced(&self, vertices: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in vertices.iter().enumerate() {
            local[v] = k;
        }
        let rows = vertices
            .iter()
            .map(|&v| {
                self.rows[v]
                    .iter()
                    .filter(|&&(j, _)| local[j] != usize::MAX)
                    .map(|&(j, w)| (local[j], w))
                    .collect::<Vec<_>>()
            })
            .map(|mut r| {
                r.sort_by_key(|&(j, _)| j);
                r
            })
            .collect();
        Self {
            n: vertices.len(),
            rows,
        }
    }

    /// Number of connected components (isolated vertices count as one each).
    pub fn n_components(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.rows[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    /// `row,col,value` CSV of every stored entry.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["row", "col", "value"])?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                wtr.write_record([i.to_string(), j.to_string(), w.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
        Ok(())
    }
}

/// `A = |C| + |C^T|`.
pub fn build_affinity(c: &CoefMatrix) -> AffinityMatrix {
    let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (r, col, v) in c.triplets() {
        *upper.entry((r.min(col), r.max(col))).or_insert(0.0) += v.abs();
    }
    AffinityMatrix::from_upper(c.n(), upper)
}

/// `L = I - D^{-1/2} A D^{-1/2}`. Isolated vertices keep `L_ii = 1`.
pub fn normalized_laplacian(a: &AffinityMatrix) -> DMatrix<f64> {
    let inv_sqrt: Vec<f64> = a
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = DMatrix::identity(a.n(), a.n());
    for i in 0..a.n() {
        for &(j, w) in a.row(i) {
            let (lo, hi) = (i.min(j), i.max(j));
            l[(i, j)] = -w * (inv_sqrt[lo] * inv_sqrt[hi]);
        }
    }
    l
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn symmetric_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let max_iters = 100 * n.max(10);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, max_iters).ok_or(SscError::Numerical {
        iterations: max_iters,
        n,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    Ok((values, vectors))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub n_clusters: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub rng_seed: u64,
}

impl SpectralConfig {
    pub fn new(n_clusters: usize, rng_seed: u64) -> Self {
        Self {
            n_clusters,
            kmeans_restarts: 20,
            kmeans_max_iters: 300,
            rng_seed,
        }
    }
}

/// Segments the affinity graph into `cfg.n_clusters` groups: bottom
/// eigenvectors of the normalized Laplacian, unit-length rows, k-means.
pub fn spectral_cluster(a: &AffinityMatrix, cfg: &SpectralConfig) -> Result<Labels> {
    if cfg.n_clusters < 2 {
        return Err(SscError::Contract("spectral clustering needs n_clusters >= 2".into()));
    }
    if cfg.n_clusters > a.n() {
        return Err(SscError::Contract(format!(
            "{} clusters requested for {} points",
            cfg.n_clusters,
            a.n()
        )));
    }
    if cfg.kmeans_restarts == 0 || cfg.kmeans_max_iters == 0 {
        return Err(SscError::Contract("k-means restarts and iterations must be positive".into()));
    }

    let (_, vectors) = symmetric_eigen(normalized_laplacian(a))?;
    let mut embedding = vectors.columns(0, cfg.n_clusters).into_owned();
    for mut row in embedding.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let fit = kmeans(
        &embedding,
        &KMeansConfig {
            n_clusters: cfg.n_clusters,
            restarts: cfg.kmeans_restarts,
            max_iters: cfg.kmeans_max_iters,
            rng_seed: cfg.rng_seed,
        },
    )?;
    Ok(Labels::from_raw(&fit.labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eigenvalues(a: &AffinityMatrix) -> Vec<f64> {
        symmetric_eigen(normalized_laplacian(a)).unwrap().0
    }

    #[test]
    fn affinity_examples() {
        assert_eq!(build_affinity(&CoefMatrix::zeros(3)).nnz(), 0);

        let c = CoefMatrix::from_triplets(3, [(0, 1, -2.0)]).unwrap();
        let a = build_affinity(&c);
        assert_eq!((a.get(0, 1), a.get(1, 0)), (2.0, 2.0));

        let c = CoefMatrix::from_triplets(3, [(0, 1, 1.0), (1, 0, 3.0)]).unwrap();
        let a = build_affinity(&c);
        assert_eq!((a.get(0, 1), a.get(1, 0)), (4.0, 4.0));
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn laplacian_single_edge() {
        let a = AffinityMatrix::from_pairs(2, [(0, 1, 1.0)]).unwrap();
        let l = normalized_laplacian(&a);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let ev = eigenvalues(&a);
        assert!(ev[0].abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_isolated_vertices() {
        let a = AffinityMatrix::from_pairs(4, []).unwrap();
        assert_eq!(normalized_laplacian(&a), DMatrix::identity(4, 4));
    }

    #[test]
    fn laplacian_triangle() {
        let a = AffinityMatrix::from_pairs(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let ev = eigenvalues(&a);
        for (got, want) in ev.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn two_blocks_split_exactly() {
        let mut pairs = Vec::new();
        for block in [0..4usize, 4..9] {
            for i in block.clone() {
                for j in block.clone() {
                    if i < j {
                        pairs.push((i, j, 0.5 + (i * j % 3) as f64));
                    }
                }
            }
        }
        let a = AffinityMatrix::from_pairs(9, pairs).unwrap();
        let labels = spectral_cluster(&a, &SpectralConfig::new(2, 3)).unwrap();
        let l = labels.assignments();
        assert!(l[..4].iter().all(|&x| x == l[0]));
        assert!(l[4..].iter().all(|&x| x == l[4]));
        assert_ne!(l[0], l[4]);
        assert_eq!(labels, spectral_cluster(&a, &SpectralConfig::new(2, 3)).unwrap());
    }

    #[test]
    fn config_errors() {
        let a = AffinityMatrix::from_pairs(3, [(0, 1, 1.0)]).unwrap();
        assert!(spectral_cluster(&a, &SpectralConfig::new(1, 0)).is_err());
        assert!(spectral_cluster(&a, &SpectralConfig::new(4, 0)).is_err());
    }

    fn random_graph(n: usize, blocks: usize, bits: &[bool], weights: &[f64]) -> AffinityMatrix {
        let mut pairs = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                let same = i % blocks == j % blocks;
                if same && bits[k % bits.len()] {
                    pairs.push((i, j, weights[k % weights.len()]));
                }
                k += 1;
            }
        }
        AffinityMatrix::from_pairs(n, pairs).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn spectrum_bounds_and_zero_multiplicity(
            n in 3usize..16,
            blocks in 1usize..4,
            bits in proptest::collection::vec(any::<bool>(), 1..40),
            weights in proptest::collection::vec(0.01f64..5.0, 1..40),
        ) {
            let a = random_graph(n, blocks, &bits, &weights);
            let l = normalized_laplacian(&a);
            prop_assert!((&l - l.transpose()).amax() == 0.0);
            let ev = eigenvalues(&a);
            prop_assert!(ev.iter().all(|&v| (-1e-9..=2.0 + 1e-9).contains(&v)));
            // isolated vertices carry eigenvalue 1 by convention
            let isolated = (0..a.n()).filter(|&i| a.row(i).is_empty()).count();
            let zeros = ev.iter().filter(|&&v| v.abs() < 1e-9).count();
            prop_assert_eq!(zeros, a.n_components() - isolated);
        }

        #[test]
        fn affinity_is_symmetric_and_bounded(
            entries in proptest::collection::btree_map((0usize..12, 0usize..12), -3.0f64..3.0, 0..40)
        ) {
            let c = CoefMatrix::from_triplets(12, entries.into_iter().filter(|((r, c), _)| r != c).map(|((r, c), v)| (r, c, v))).unwrap();
            let a = build_affinity(&c);
            let d = a.to_dense();
            prop_assert_eq!(&d, &d.transpose());
            prop_assert!(c.nnz() <= a.nnz() && a.nnz() <= 2 * c.nnz());
        }
    }
}
