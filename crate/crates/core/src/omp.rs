//! Orthogonal matching pursuit and the self-expressive drivers built on it.
//!
//! The least-squares fit on the active set is kept as a thin QR factorization
//! that grows by one column per iteration (modified Gram-Schmidt with one
//! reorthogonalization pass), so each step costs `O(dim * |support|)` on top
//! of the correlation sweep.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::KArray;
use crate::data::{DataMatrix, UNIT_NORM_TOL};
use crate::error::{Result, SscError};

/// Largest residual correlation treated as zero.
pub const ZERO_CORRELATION: f64 = 1e-14;
/// Relative size of the new orthogonal direction below which an atom is
/// considered to lie in the span of the active set.
const DEPENDENT_ATOM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    pub max_atoms: usize,
    /// Stop once the Euclidean norm of the residual drops below this value.
    pub residual_threshold: f64,
}

impl OmpConfig {
    pub fn new(max_atoms: usize, residual_threshold: f64) -> Result<Self> {
        let cfg = Self {
            max_atoms,
            residual_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_atoms == 0 {
            return Err(SscError::Budget("max_atoms must be at least 1".into()));
        }
        if !(self.residual_threshold >= 0.0 && self.residual_threshold.is_finite()) {
            return Err(SscError::Range(format!(
                "residual threshold {} must be finite and nonnegative",
                self.residual_threshold
            )));
        }
        Ok(())
    }
}

/// Why the pursuit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Threshold,
    Budget,
    ZeroCorrelation,
    DependentAtom,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// Atom indices in selection order.
    pub support: Vec<usize>,
    /// Least-squares coefficients, aligned with `support`.
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// Residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
    pub stop: StopReason,
}

impl SparseCode {
    pub fn iterations(&self) -> usize {
        self.support.len()
    }

    /// Dense coefficient vector over all atoms.
    pub fn to_dense(&self, n_atoms: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n_atoms);
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            v[j] = c;
        }
        v
    }
}

/// Plain OMP of `target` over the columns of `dictionary`.
///
/// Atoms must have unit norm. Ties in correlation go to the lowest index.
pub fn omp_solve(dictionary: &DMatrix<f64>, target: &[f64], cfg: &OmpConfig) -> Result<SparseCode> {
    cfg.validate()?;
    if dictionary.ncols() == 0 || dictionary.nrows() == 0 {
        return Err(SscError::Contract("empty dictionary".into()));
    }
    if target.len() != dictionary.nrows() {
        return Err(SscError::Shape(format!(
            "target has dimension {}, dictionary atoms have {}",
            target.len(),
            dictionary.nrows()
        )));
    }
    for (j, col) in dictionary.column_iter().enumerate() {
        if (col.norm() - 1.0).abs() > UNIT_NORM_TOL {
            return Err(SscError::Contract(format!("atom {j} is not unit-norm")));
        }
    }
    Ok(pursue(dictionary, target, cfg, None))
}

/// OMP with atom `excluded` masked out of the selection.
fn pursue(dict: &DMatrix<f64>, target: &[f64], cfg: &OmpConfig, excluded: Option<usize>) -> SparseCode {
    let n_atoms = dict.ncols();
    let y = DVector::from_column_slice(target);
    let mut residual = y.clone();
    let mut residual_norm = residual.norm();
    let mut history = vec![residual_norm];

    let mut masked = vec![false; n_atoms];
    if let Some(i) = excluded {
        masked[i] = true;
    }
    let mut support: Vec<usize> = Vec::with_capacity(cfg.max_atoms);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cfg.max_atoms);
    // Column j of the upper-triangular R holds j + 1 entries.
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(cfg.max_atoms);
    let mut qty: Vec<f64> = Vec::with_capacity(cfg.max_atoms);

    let stop = loop {
        if residual_norm < cfg.residual_threshold {
            break StopReason::Threshold;
        }
        if support.len() >= cfg.max_atoms {
            break StopReason::Budget;
        }

        let corr = dict.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if masked[j] {
                continue;
            }
            let a = c.abs();
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((j, a));
            }
        }
        let Some((j, best_corr)) = best else {
            break StopReason::Exhausted;
        };
        if best_corr < ZERO_CORRELATION {
            break StopReason::ZeroCorrelation;
        }

        let atom = dict.column(j);
        let mut w = atom.clone_owned();
        let mut r = vec![0.0; basis.len() + 1];
        for _pass in 0..2 {
            for (q, rk) in basis.iter().zip(r.iter_mut()) {
                let p = q.dot(&w);
                *rk += p;
                w.axpy(-p, q, 1.0);
            }
        }
        let w_norm = w.norm();
        if w_norm <= DEPENDENT_ATOM * atom.norm() {
            // The residual is already orthogonal to this atom's span; the
            // least-squares fit cannot improve.
            break StopReason::DependentAtom;
        }
        w /= w_norm;
        *r.last_mut().expect("nonempty") = w_norm;

        let gamma = w.dot(&residual);
        residual.axpy(-gamma, &w, 1.0);
        let new_norm = residual.norm();
        debug_assert!(
            new_norm <= residual_norm * (1.0 + 1e-12) + 1e-15,
            "residual grew from {residual_norm} to {new_norm}"
        );
        residual_norm = new_norm;
        history.push(residual_norm);

        masked[j] = true;
        support.push(j);
        basis.push(w);
        r_cols.push(r);
        qty.push(gamma);
    };

    // Back substitution: R c = Q^T y.
    let m = support.len();
    let mut coefficients = qty;
    for row in (0..m).rev() {
        let mut acc = coefficients[row];
        for col in row + 1..m {
            acc -= r_cols[col][row] * coefficients[col];
        }
        coefficients[row] = acc / r_cols[row][row];
    }

    SparseCode {
        support,
        coefficients,
        residual_norm,
        residual_history: history,
        stop,
    }
}

/// Sparse `N × N` self-expressive matrix. Column `i` holds the coefficients
/// expressing point `i` in terms of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix {
    n: usize,
    /// Per column, `(row, value)` sorted by row, no zeros, no diagonal.
    columns: Vec<Vec<(usize, f64)>>,
}

impl CoefMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            columns: vec![Vec::new(); n],
        }
    }

    /// Builds from `(row, col, value)` entries. Explicit zeros are dropped.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut columns = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(SscError::Shape(format!("entry ({r}, {c}) outside {n} x {n}")));
            }
            if !v.is_finite() {
                return Err(SscError::Contract(format!("entry ({r}, {c}) is not finite")));
            }
            if v == 0.0 {
                continue;
            }
            if r == c {
                return Err(SscError::Contract(format!("nonzero diagonal entry at {r}")));
            }
            columns[c].push((r, v));
        }
        for (c, col) in columns.iter_mut().enumerate() {
            col.sort_by_key(|&(r, _)| r);
            if let Some(w) = col.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(SscError::Contract(format!(
                    "duplicate entry ({}, {c})",
                    w[0].0
                )));
            }
        }
        Ok(Self { n, columns })
    }

    fn from_codes(n: usize, codes: Vec<SparseCode>) -> Self {
        let columns = codes
            .into_iter()
            .map(|code| {
                let mut col: Vec<(usize, f64)> = code
                    .support
                    .into_iter()
                    .zip(code.coefficients)
                    .filter(|&(_, v)| v != 0.0)
                    .collect();
                col.sort_by_key(|&(r, _)| r);
                col
            })
            .collect();
        Self { n, columns }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn column(&self, c: usize) -> &[(usize, f64)] {
        &self.columns[c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let col = &self.columns[c];
        col.binary_search_by_key(&r, |&(row, _)| row)
            .map_or(0.0, |k| col[k].1)
    }

    /// Entries in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// `row,col,value` CSV with a header line. The first record is an explicit
    /// zero at `(n-1, n-1)` so that the size survives a round trip.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["row", "col", "value"])?;
        if self.n > 0 {
            wtr.write_record([
            (self.n - 1).to_string(),
            (self.n - 1).to_string(),
            "0".to_string(),
            ])?;
        }
        for (r, c, v) in self.triplets() {
            wtr.write_record([r.to_string(), c.to_string(), v.to_string()])?;
        }
        wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
        Ok(())
    }

    /// Reads the triplet CSV. Without `n`, the size is one past the largest
    /// index found.
    pub fn read_csv(reader: impl Read, n: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut triplets = Vec::new();
        let mut max_idx = 0usize;
        for (i, rec) in rdr.deserialize::<(usize, usize, f64)>().enumerate() {
            let (r, c, v) = rec.map_err(|e| SscError::Parse {
                row: i + 2,
                column: 0,
                message: e.to_string(),
            })?;
            max_idx = max_idx.max(r).max(c);
            triplets.push((r, c, v));
        }
        let n = n.unwrap_or(max_idx + 1);
        Self::from_triplets(n, triplets)
    }
}

fn check_self_expression(x: &DataMatrix) -> Result<()> {
    x.require_unit_normalized()?;
    if x.n() < crate::data::MIN_POINTS {
        return Err(SscError::Size {
            min: crate::data::MIN_POINTS,
            got: x.n(),
        });
    }
    Ok(())
}

/// Runs OMP for every point with its own budget; point `i` is excluded from
/// its own dictionary.
pub fn ssc_omp_budgets(x: &DataMatrix, budgets: &[usize], eps: f64) -> Result<CoefMatrix> {
    check_self_expression(x)?;
    let n = x.n();
    if budgets.len() != n {
        return Err(SscError::Shape(format!(
            "{} budgets for {n} points",
            budgets.len()
        )));
    }
    if let Some((i, &b)) = budgets
        .iter()
        .enumerate()
        .find(|(_, &b)| b == 0 || b > n - 2)
    {
        return Err(SscError::Budget(format!(
            "budget {b} of point {i} not in [1, {}]",
            n - 2
        )));
    }
    OmpConfig::new(1, eps)?;

    let dict = x.values();
    let codes: Vec<SparseCode> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = OmpConfig {
                max_atoms: budgets[i],
                residual_threshold: eps,
            };
            pursue(dict, x.point(i).as_slice(), &cfg, Some(i))
        })
        .collect();
    Ok(CoefMatrix::from_codes(n, codes))
}

/// Self-expressive OMP with a uniform budget `k`.
pub fn ssc_omp(x: &DataMatrix, k: usize, eps: f64) -> Result<CoefMatrix> {
    ssc_omp_budgets(x, &vec![k; x.n()], eps)
}

/// Self-expressive OMP where point `i` may use `k_array.sizes[i]` atoms.
pub fn ssc_omp_adaptive(x: &DataMatrix, k_array: &KArray, eps: f64) -> Result<CoefMatrix> {
    ssc_omp_budgets(x, &k_array.sizes, eps)
}
