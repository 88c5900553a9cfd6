//! Evaluation metrics for subspace clustering.
//!
//! | Metric | Meaning |
//! |--------|---------|
//! | ACCR | % of points correctly labeled under the best cluster matching |
//! | TIME | wall-clock seconds of representation + clustering |
//! | CONN | min over true clusters of the algebraic connectivity of the induced affinity subgraph |
//! | PERC | % of points whose coefficients only use same-cluster points |
//! | SSR  | mean fraction (in %) of each column's l1 mass on other clusters |
//! | SEA  | `nnz(|C| + |C^T|) / (2 nnz(C))`, in `[0.5, 1]` |

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Labels;
use crate::error::{Result, SscError};
use crate::hungarian::max_weight_assignment;
use crate::omp::CoefMatrix;
use crate::spectral::{normalized_laplacian, symmetric_eigen, AffinityMatrix};

/// Clustering accuracy in percent, maximized over one-to-one matchings of
/// predicted to true cluster ids.
pub fn accuracy(pred: &Labels, truth: &Labels) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(SscError::Contract(format!(
            "{} predicted labels for {} points",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(SscError::Contract("no points to score".into()));
    }
    let mut counts = vec![vec![0i64; truth.n_clusters()]; pred.n_clusters()];
    for (&p, &t) in pred.assignments().iter().zip(truth.assignments()) {
        counts[p][t] += 1;
    }
    let (_, matched) = max_weight_assignment(&counts);
    Ok(100.0 * matched as f64 / truth.len() as f64)
}

/// Smallest algebraic connectivity over the ground-truth clusters.
///
/// A disconnected cluster subgraph yields exactly 0, as does a singleton
/// cluster.
pub fn connectivity(a: &AffinityMatrix, truth: &Labels) -> Result<f64> {
    if a.n() != truth.len() {
        return Err(SscError::Contract(format!(
            "affinity has {} vertices, labels cover {}",
            a.n(),
            truth.len()
        )));
    }
    let per_cluster: Vec<f64> = truth
        .members()
        .par_iter()
        .map(|members| {
            if members.len() < 2 {
                return Ok(0.0);
            }
            let sub = a.induced(members);
            if sub.n_components() > 1 {
                return Ok(0.0);
            }
            let (values, _) = symmetric_eigen(normalized_laplacian(&sub))?;
            Ok(values[1].max(0.0))
        })
        .collect::<Result<_>>()?;
    Ok(per_cluster.into_iter().fold(f64::INFINITY, f64::min))
}

fn check_shapes(c: &CoefMatrix, truth: &Labels) -> Result<()> {
    if c.n() != truth.len() {
        return Err(SscError::Contract(format!(
            "coefficient matrix is {0} x {0}, labels cover {1} points",
            c.n(),
            truth.len()
        )));
    }
    Ok(())
}

/// PERC: percentage of columns with no cross-cluster nonzero. An all-zero
/// column counts as preserving.
pub fn subspace_preserving_rate(c: &CoefMatrix, truth: &Labels) -> Result<f64> {
    check_shapes(c, truth)?;
    let n = c.n();
    let preserving = (0..n)
        .filter(|&i| {
            c.column(i)
                .iter()
                .all(|&(j, _)| truth.get(j) == truth.get(i))
        })
        .count();
    Ok(100.0 * preserving as f64 / n as f64)
}

/// SSR: `100/N * sum_i ||c_i outside cluster(i)||_1 / ||c_i||_1`; zero
/// columns contribute 0.
pub fn subspace_preserving_error(c: &CoefMatrix, truth: &Labels) -> Result<f64> {
    check_shapes(c, truth)?;
    let n = c.n();
    let total: f64 = (0..n)
        .map(|i| {
            let (mut wrong, mut all) = (0.0, 0.0);
            for &(j, v) in c.column(i) {
                all += v.abs();
                if truth.get(j) != truth.get(i) {
                    wrong += v.abs();
                }
            }
            if all > 0.0 {
                wrong / all
            } else {
                0.0
            }
        })
        .sum();
    Ok(100.0 * total / n as f64)
}

/// Self-expressive-affinity ratio on sparsity patterns.
pub fn sea_ratio(c: &CoefMatrix) -> Result<f64> {
    let nnz_c = c.nnz();
    if nnz_c == 0 {
        return Err(SscError::UndefinedMetric(
            "SEA ratio of an all-zero coefficient matrix".into(),
        ));
    }
    let pairs: HashSet<(usize, usize)> = c
        .triplets()
        .map(|(r, col, _)| (r.min(col), r.max(col)))
        .collect();
    let nnz_a = 2 * pairs.len();
    Ok(nnz_a as f64 / (2 * nnz_c) as f64)
}

/// Runs `task` and returns its result with the elapsed wall time in seconds.
pub fn timed<T>(task: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = task();
    (out, start.elapsed().as_secs_f64())
}

/// All metrics of one trial plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub method: String,
    pub n_clusters: usize,
    pub samples_per_cluster: Option<usize>,
    pub n_points: usize,
    pub k: usize,
    pub eps: f64,
    pub sigma: f64,
    /// Seed of this trial (derived from the master seed and trial index).
    pub seed: u64,
    pub trial: usize,
    pub subsample_hash: String,
    pub accr: f64,
    pub time_seconds: f64,
    pub conn: f64,
    pub perc: f64,
    pub ssr: f64,
    /// `None` when the coefficient matrix has no nonzeros.
    pub sea: Option<f64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[usize]) -> Labels {
        Labels::from_raw(v)
    }

    /// Exhaustive oracle: best accuracy over all injective maps pred -> truth.
    fn brute_accuracy(pred: &Labels, truth: &Labels) -> f64 {
        fn go(p: usize, pred: &Labels, truth: &Labels, used: &mut Vec<bool>, map: &mut Vec<Option<usize>>) -> usize {
            if p == pred.n_clusters() {
                return pred
                    .assignments()
                    .iter()
                    .zip(truth.assignments())
                    .filter(|(&a, &b)| map[a] == Some(b))
                    .count();
            }
            let mut best = go(p + 1, pred, truth, used, map);
            for t in 0..used.len() {
                if !used[t] {
                    used[t] = true;
                    map[p] = Some(t);
                    best = best.max(go(p + 1, pred, truth, used, map));
                    map[p] = None;
                    used[t] = false;
                }
            }
            best
        }
        let mut used = vec![false; truth.n_clusters()];
        let mut map = vec![None; pred.n_clusters()];
        100.0 * go(0, pred, truth, &mut used, &mut map) as f64 / truth.len() as f64
    }

    #[test]
    fn accuracy_examples() {
        let t = labels(&[0, 0, 1, 1, 2]);
        assert_eq!(accuracy(&t, &t).unwrap(), 100.0);
        assert_eq!(accuracy(&labels(&[2, 2, 0, 0, 1]), &t).unwrap(), 100.0);
        assert_eq!(accuracy(&labels(&[0, 1, 1, 1]), &labels(&[0, 0, 1, 1])).unwrap(), 75.0);
        assert!(accuracy(&labels(&[0, 1]), &t).is_err());
    }

    fn complete(members: &[usize], w: f64) -> Vec<(usize, usize, f64)> {
        let mut pairs = Vec::new();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                pairs.push((i, j, w));
            }
        }
        pairs
    }

    #[test]
    fn connectivity_complete_clusters() {
        // K_m normalized Laplacian: eigenvalues 0 and m/(m-1).
        let mut pairs = complete(&[0, 1, 2], 2.0);
        pairs.extend(complete(&[3, 4, 5, 6], 0.5));
        pairs.push((2, 3, 1.0));
        let a = AffinityMatrix::from_pairs(7, pairs).unwrap();
        let truth = labels(&[0, 0, 0, 1, 1, 1, 1]);
        let conn = connectivity(&a, &truth).unwrap();
        assert!((conn - 4.0 / 3.0).abs() < 1e-12, "{conn}");
    }

    #[test]
    fn connectivity_disconnected_and_singletons() {
        let a = AffinityMatrix::from_pairs(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(connectivity(&a, &labels(&[0, 0, 0, 0])).unwrap(), 0.0);
        assert!(connectivity(&a, &labels(&[0, 0, 1, 1])).unwrap() > 1.0);
        assert_eq!(connectivity(&a, &labels(&[0, 1, 2, 3])).unwrap(), 0.0);
    }

    #[test]
    fn perc_and_ssr_examples() {
        let truth = labels(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let mut t = vec![(1, 0, 1.0), (0, 1, 0.5), (6, 5, 1.0), (5, 6, -2.0)];
        assert_eq!(subspace_preserving_rate(&CoefMatrix::from_triplets(10, t.clone()).unwrap(), &truth).unwrap(), 100.0);
        t.push((7, 2, 0.3));
        let c = CoefMatrix::from_triplets(10, t).unwrap();
        assert_eq!(subspace_preserving_rate(&c, &truth).unwrap(), 90.0);
        assert_eq!(subspace_preserving_rate(&CoefMatrix::zeros(10), &truth).unwrap(), 100.0);

        let two = labels(&[0, 1, 0]);
        // column 0: in-class 1.0 at row 2, cross-class 1.0 at row 1
        let c = CoefMatrix::from_triplets(3, [(2, 0, 1.0), (1, 0, -1.0)]).unwrap();
        let ssr = subspace_preserving_error(&c, &two).unwrap();
        assert!((ssr - 100.0 * 0.5 / 3.0).abs() < 1e-12);
        assert_eq!(subspace_preserving_error(&CoefMatrix::zeros(3), &two).unwrap(), 0.0);
    }

    #[test]
    fn ssr_two_point_example() {
        // One half-wrong column among two scored points would give 25; with a
        // zero diagonal that needs N = 4, so the mean is 0.5 / 4.
        let truth = labels(&[0, 0, 1, 1]);
        let c = CoefMatrix::from_triplets(4, [(1, 0, 2.0), (2, 0, 2.0), (0, 1, 1.0), (3, 2, 1.0), (2, 3, 1.0)]).unwrap();
        assert!((subspace_preserving_error(&c, &truth).unwrap() - 12.5).abs() < 1e-12);
    }

    #[test]
    fn sea_examples() {
        let sym = CoefMatrix::from_triplets(3, [(0, 1, 1.0), (1, 0, -2.0)]).unwrap();
        assert_eq!(sea_ratio(&sym).unwrap(), 0.5);
        let one_way = CoefMatrix::from_triplets(3, [(0, 1, 1.0)]).unwrap();
        assert_eq!(sea_ratio(&one_way).unwrap(), 1.0);
        let mixed = CoefMatrix::from_triplets(4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0)]).unwrap();
        assert!((sea_ratio(&mixed).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!(matches!(sea_ratio(&CoefMatrix::zeros(3)), Err(SscError::UndefinedMetric(_))));
    }

    #[test]
    fn timed_is_nonnegative() {
        let (v, t) = timed(|| 3);
        assert_eq!(v, 3);
        assert!(t >= 0.0);
        let (_, t2) = timed(|| std::thread::sleep(std::time::Duration::from_millis(2)));
        assert!(t2 >= 0.002);
    }

    proptest! {
        #[test]
        fn accuracy_matches_enumeration(
            truth in proptest::collection::vec(0usize..4, 1..9),
            pred_seed in proptest::collection::vec(0usize..4, 8),
        ) {
            let t = labels(&truth);
            let p = labels(&pred_seed[..truth.len()]);
            prop_assert!((accuracy(&p, &t).unwrap() - brute_accuracy(&p, &t)).abs() < 1e-12);
        }

        #[test]
        fn accuracy_relabel_invariant(
            truth in proptest::collection::vec(0usize..4, 2..20),
            pred in proptest::collection::vec(0usize..4, 20),
            shift in 1usize..4,
        ) {
            let t = labels(&truth);
            let p_raw = &pred[..truth.len()];
            let p = labels(p_raw);
            let p2 = labels(&p_raw.iter().map(|&x| (x + shift) % 4).collect::<Vec<_>>());
            let t2 = labels(&truth.iter().map(|&x| 10 - x).collect::<Vec<_>>());
            let base = accuracy(&p, &t).unwrap();
            prop_assert_eq!(base, accuracy(&p2, &t).unwrap());
            prop_assert_eq!(base, accuracy(&p, &t2).unwrap());
        }

        #[test]
        fn sea_bounds(entries in proptest::collection::btree_map((0usize..10, 0usize..10), 0.5f64..2.0, 1..30)) {
            let trip: Vec<_> = entries.into_iter().filter(|((r, c), _)| r != c).map(|((r, c), v)| (r, c, v)).collect();
            prop_assume!(!trip.is_empty());
            let c = CoefMatrix::from_triplets(10, trip).unwrap();
            let s = sea_ratio(&c).unwrap();
            prop_assert!((0.5..=1.0).contains(&s));
            let symmetric = c.triplets().all(|(r, col, _)| c.get(col, r) != 0.0);
            prop_assert_eq!(s == 0.5, symmetric);
        }
    }
}
