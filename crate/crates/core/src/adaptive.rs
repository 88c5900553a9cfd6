//! Data-adaptive dictionary sizes.
//!
//! Each point is scored by the mean cosine similarity to its `k - 1` nearest
//! neighbours (smallest angles, self excluded). Scores are rescaled to
//! `[0, k]` and shifted so that their rounded mean is `k`:
//!
//! ```text
//! normalized_i = k * (raw_i - min) / (max - min)
//! size_i       = k - round(mean(normalized)) + round(normalized_i)
//! ```
//!
//! Points in dense regions of their cluster get larger budgets than points
//! that sit between clusters.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SscError};

/// Score spans at or below this are round-off: cosines of unit vectors carry
/// absolute errors around `dim * f64::EPSILON`.
pub const SCORE_SPAN_TOL: f64 = 1e-10;

/// `X^T X` of a unit-normalized data matrix: pairwise cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram(DMatrix<f64>);

impl Gram {
    pub fn new(x: &DataMatrix) -> Result<Self> {
        x.require_unit_normalized()?;
        Ok(Self(x.values().tr_mul(x.values())))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodScore {
    /// Mean similarity to the `k - 1` nearest other points.
    pub raw_mean: Vec<f64>,
    pub max_d: f64,
    pub min_d: f64,
    /// `raw_mean` rescaled to `[0, k]`.
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KArray {
    pub sizes: Vec<usize>,
    pub base_k: usize,
    /// Sizes before clamping to `[1, N - 2]`.
    pub unclamped: Vec<i64>,
}

impl KArray {
    /// The same budget for every point.
    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            sizes: vec![k; n],
            base_k: k,
            unclamped: vec![k as i64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sizes.iter().sum::<usize>() as f64 / self.sizes.len() as f64
    }

    pub fn unclamped_mean(&self) -> f64 {
        self.unclamped.iter().sum::<i64>() as f64 / self.unclamped.len() as f64
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 {
        return Err(SscError::Budget(format!(
            "k = {k}: at least one neighbour column is needed (k >= 2)"
        )));
    }
    if k > n - 1 {
        return Err(SscError::Budget(format!(
            "k = {k} exceeds the {} other points",
            n - 1
        )));
    }
    Ok(())
}

pub fn neighborhood_scores(x: &DataMatrix, k: usize) -> Result<NeighborhoodScore> {
    let gram = Gram::new(x)?;
    neighborhood_scores_from_gram(&gram, k)
}

pub fn neighborhood_scores_from_gram(gram: &Gram, k: usize) -> Result<NeighborhoodScore> {
    let n = gram.n();
    check_k(k, n)?;
    let g = gram.matrix();

    // Rows of a symmetric matrix are its columns; columns are contiguous.
    let raw_mean: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = g.column(i).iter().copied().collect();
            // stable: ties keep column order
            row.sort_by(|a, b| b.total_cmp(a));
            row[1..k].iter().sum::<f64>() / (k - 1) as f64
        })
        .collect();

    let max_d = raw_mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_d = raw_mean.iter().copied().fold(f64::INFINITY, f64::min);
    let kf = k as f64;
    let normalized = if max_d - min_d <= SCORE_SPAN_TOL {
        vec![kf / 2.0; n]
    } else {
        let span = max_d - min_d;
        raw_mean
            .iter()
            .map(|&r| (kf * (r - min_d) / span).clamp(0.0, kf))
            .collect()
    };

    Ok(NeighborhoodScore {
        raw_mean,
        max_d,
        min_d,
        normalized,
    })
}

pub fn compute_k_array(x: &DataMatrix, k: usize) -> Result<KArray> {
    let gram = Gram::new(x)?;
    compute_k_array_from_gram(&gram, k)
}

pub fn compute_k_array_from_gram(gram: &Gram, k: usize) -> Result<KArray> {
    let scores = neighborhood_scores_from_gram(gram, k)?;
    Ok(k_array_from_scores(&scores, k))
}

/// Integer budgets from normalized scores. `f64::round` rounds half away
/// from zero on every platform.
pub fn k_array_from_scores(scores: &NeighborhoodScore, k: usize) -> KArray {
    let n = scores.normalized.len();
    let mean = scores.normalized.iter().sum::<f64>() / n as f64;
    let offset = k as i64 - mean.round() as i64;
    let unclamped: Vec<i64> = scores
        .normalized
        .iter()
        .map(|&s| offset + s.round() as i64)
        .collect();
    let upper = n.saturating_sub(2).max(1) as i64;
    let sizes = unclamped
        .iter()
        .map(|&s| s.clamp(1, upper) as usize)
        .collect();
    KArray {
        sizes,
        base_k: k,
        unclamped,
    }
}
