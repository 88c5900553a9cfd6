//! Data matrices, ground-truth labels and their sources.
//!
//! Points are stored as columns (`dim × N`). CSV files are row-per-point and
//! are transposed on load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVectorView};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::seed;

/// Smallest column norm accepted by [`normalize_columns`].
pub const MIN_COLUMN_NORM: f64 = 1e-12;
/// Tolerance on column norms of a matrix flagged as unit-normalized.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Self-expression needs at least two candidate atoms per point.
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    unit_normalized: bool,
}

impl DataMatrix {
    /// Wraps a `dim × N` matrix of points stored as columns.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(SscError::Shape("dimension must be at least 1".into()));
        }
        if values.ncols() < MIN_POINTS {
            return Err(SscError::Size {
                min: MIN_POINTS,
                got: values.ncols(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(SscError::Range(format!(
                "non-finite value at coordinate {r} of point {c}"
            )));
        }
        Ok(Self {
            values,
            unit_normalized: false,
        })
    }

    /// Wraps a matrix whose columns are already unit vectors. Fails if any
    /// column norm is off by more than [`UNIT_NORM_TOL`].
    pub fn from_unit_columns(values: DMatrix<f64>) -> Result<Self> {
        let mut x = Self::new(values)?;
        for (j, col) in x.values.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(SscError::Contract(format!(
                    "column {j} has norm {norm}, expected unit norm"
                )));
            }
        }
        x.unit_normalized = true;
        Ok(x)
    }

    /// Builds a matrix from row-per-point data.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(SscError::Shape(format!(
                "point {i} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        let values = DMatrix::from_fn(dim, points.len(), |r, c| points[c][r]);
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.unit_normalized
    }

    pub fn point(&self, i: usize) -> DVectorView<'_, f64> {
        self.values.column(i)
    }

    /// Copies the given columns, in order, into a new matrix.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n()) {
            return Err(SscError::Shape(format!(
                "column {bad} out of range for {} points",
                self.n()
            )));
        }
        let values = self.values.select_columns(columns);
        let mut out = Self::new(values)?;
        out.unit_normalized = self.unit_normalized;
        Ok(out)
    }

    pub(crate) fn require_unit_normalized(&self) -> Result<()> {
        if self.unit_normalized {
            Ok(())
        } else {
            Err(SscError::Contract(
                "input columns must be unit-normalized".into(),
            ))
        }
    }
}

/// Cluster assignments, always contiguous in `0..n_clusters`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    assignments: Vec<usize>,
    n_clusters: usize,
}

impl Labels {
    pub fn new(assignments: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if n_clusters == 0 {
            return Err(SscError::Contract("n_clusters must be positive".into()));
        }
        let mut seen = vec![false; n_clusters];
        for (i, &a) in assignments.iter().enumerate() {
            if a >= n_clusters {
                return Err(SscError::Contract(format!(
                    "label {a} of point {i} not in 0..{n_clusters}"
                )));
            }
            seen[a] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SscError::Contract(format!(
                "cluster {missing} has no members"
            )));
        }
        Ok(Self {
            assignments,
            n_clusters,
        })
    }

    /// Remaps arbitrary ids to `0..k`, ordered by id value.
    pub fn from_raw<T: Ord + Copy>(raw: &[T]) -> Self {
        let mut ids: BTreeMap<T, usize> = raw.iter().map(|&r| (r, 0)).collect();
        for (next, slot) in ids.values_mut().enumerate() {
            *slot = next;
        }
        Self {
            assignments: raw.iter().map(|r| ids[r]).collect(),
            n_clusters: ids.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn get(&self, i: usize) -> usize {
        self.assignments[i]
    }

    /// Point indices grouped by cluster, each group in ascending order.
    /// One label per line, no header.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for a in &self.assignments {
            wtr.write_record([a.to_string()])?;
        }
        wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
        Ok(())
    }

    /// Reads the single-column format of [`Labels::write_csv`]; ids are
    /// remapped to `0..k`.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut raw = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 1 {
                return Err(SscError::Shape(format!(
                    "label row {row} has {} fields",
                    record.len()
                )));
            }
            raw.push(record[0].parse::<i64>().map_err(|e| SscError::Parse {
                row,
                column: 0,
                message: e.to_string(),
            })?);
        }
        Ok(Self::from_raw(&raw))
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_clusters];
        for (i, &a) in self.assignments.iter().enumerate() {
            groups[a].push(i);
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_subspaces: usize,
    pub subspace_dim: usize,
    pub ambient_dim: usize,
    pub points_per_subspace: usize,
    pub rng_seed: u64,
    /// Mutually orthogonal subspace bases. When false every subspace gets an
    /// independent random basis and the subspaces generally intersect at
    /// small angles only in low ambient dimension.
    #[serde(default = "default_true")]
    pub orthogonal: bool,
}

fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    pub fn new(
        n_subspaces: usize,
        subspace_dim: usize,
        ambient_dim: usize,
        points_per_subspace: usize,
        rng_seed: u64,
    ) -> Self {
        Self {
            n_subspaces,
            subspace_dim,
            ambient_dim,
            points_per_subspace,
            rng_seed,
            orthogonal: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_subspaces", self.n_subspaces),
            ("subspace_dim", self.subspace_dim),
            ("ambient_dim", self.ambient_dim),
            ("points_per_subspace", self.points_per_subspace),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(SscError::Spec(format!("{name} must be positive")));
        }
        if self.subspace_dim >= self.ambient_dim {
            return Err(SscError::Spec(format!(
                "subspace_dim {} must be below ambient_dim {}",
                self.subspace_dim, self.ambient_dim
            )));
        }
        if self.orthogonal && self.n_subspaces * self.subspace_dim > self.ambient_dim {
            return Err(SscError::Spec(format!(
                "{} orthogonal subspaces of dimension {} do not fit in ambient dimension {}",
                self.n_subspaces, self.subspace_dim, self.ambient_dim
            )));
        }
        if self.n_subspaces * self.points_per_subspace < MIN_POINTS {
            return Err(SscError::Spec(format!(
                "need at least {MIN_POINTS} points in total"
            )));
        }
        Ok(())
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Samples a union of linear subspaces. Points of subspace `s` occupy the
/// contiguous column block `s * points_per_subspace ..` and carry label `s`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DataMatrix, Labels)> {
    spec.validate()?;
    let mut rng = seed::rng(spec.rng_seed);
    let d = spec.subspace_dim;

    let bases: Vec<DMatrix<f64>> = if spec.orthogonal {
        let q = gaussian_matrix(spec.ambient_dim, spec.n_subspaces * d, &mut rng)
            .qr()
            .q();
        (0..spec.n_subspaces)
            .map(|s| q.columns(s * d, d).into_owned())
            .collect()
    } else {
        (0..spec.n_subspaces)
            .map(|_| gaussian_matrix(spec.ambient_dim, d, &mut rng).qr().q())
            .collect()
    };

    let n = spec.n_subspaces * spec.points_per_subspace;
    let mut values = DMatrix::zeros(spec.ambient_dim, n);
    let mut labels = Vec::with_capacity(n);
    for (s, basis) in bases.iter().enumerate() {
        let coeffs = gaussian_matrix(d, spec.points_per_subspace, &mut rng);
        let block = basis * coeffs;
        values
            .columns_mut(s * spec.points_per_subspace, spec.points_per_subspace)
            .copy_from(&block);
        labels.extend(std::iter::repeat_n(s, spec.points_per_subspace));
    }
    let x = normalize_columns(&DataMatrix::new(values)?)?;
    Ok((x, Labels::new(labels, spec.n_subspaces)?))
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns(x: &DataMatrix) -> Result<DataMatrix> {
    let mut values = x.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm < MIN_COLUMN_NORM {
            return Err(SscError::Degenerate { column: j, norm });
        }
        col /= norm;
    }
    Ok(DataMatrix {
        values,
        unit_normalized: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// `round(sigma * N)` randomly chosen columns get additive noise.
    #[default]
    Columns,
    /// Every column becomes `(1 - sigma) * x + sigma * noise`.
    Blend,
}

impl std::str::FromStr for NoiseMode {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "columns" => Ok(Self::Columns),
            "blend" => Ok(Self::Blend),
            other => Err(SscError::Range(format!("unknown noise mode {other:?}"))),
        }
    }
}

/// Corruption before renormalization: the perturbed matrix and the indices of
/// the columns that received noise.
pub fn perturb(
    x: &DataMatrix,
    sigma: f64,
    variance: f64,
    rng_seed: u64,
    mode: NoiseMode,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(SscError::Range(format!("noise rate {sigma} not in [0, 1]")));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(SscError::Range(format!(
            "noise variance {variance} must be positive"
        )));
    }
    let std_dev = variance.sqrt();
    let mut rng = seed::rng(rng_seed);
    let mut values = x.values.clone();
    let n = x.n();

    let touched: Vec<usize> = match mode {
        NoiseMode::Columns => {
            let count = (sigma * n as f64).round() as usize;
            let mut cols = index::sample(&mut rng, n, count).into_vec();
            cols.sort_unstable();
            for &j in &cols {
                for v in values.column_mut(j).iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += std_dev * e;
                }
            }
            cols
        }
        NoiseMode::Blend => {
            if sigma == 0.0 {
                Vec::new()
            } else {
                for v in values.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v = (1.0 - sigma) * *v + sigma * std_dev * e;
                }
                (0..n).collect()
            }
        }
    };
    Ok((values, touched))
}

/// Adds zero-mean Gaussian noise to a random fraction `sigma` of the columns,
/// then renormalizes every column.
pub fn add_gaussian_noise(
    x: &DataMatrix,
    sigma: f64,
    variance: f64,
    rng_seed: u64,
) -> Result<DataMatrix> {
    add_gaussian_noise_with(x, sigma, variance, rng_seed, NoiseMode::Columns)
}

pub fn add_gaussian_noise_with(
    x: &DataMatrix,
    sigma: f64,
    variance: f64,
    rng_seed: u64,
    mode: NoiseMode,
) -> Result<DataMatrix> {
    let (values, _) = perturb(x, sigma, variance, rng_seed, mode)?;
    normalize_columns(&DataMatrix::new(values)?)
}

/// Reads a row-per-point CSV. A non-numeric first row is treated as a header.
/// With `has_labels`, the last column holds integer class ids, which are
/// remapped to `0..k`.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool) -> Result<(DataMatrix, Option<Labels>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| SscError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, has_labels)
}

pub fn read_csv(reader: impl Read, has_labels: bool) -> Result<(DataMatrix, Option<Labels>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(str::parse::<f64>).collect();
        if row_idx == 0 && parsed.iter().any(|p| p.is_err()) {
            // header line
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(SscError::Shape(format!(
                    "row {row} has {} columns, expected {w}",
                    record.len()
                )));
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(record.len());
        for (col_idx, (p, cell)) in parsed.into_iter().zip(record.iter()).enumerate() {
            let v = p.map_err(|_| SscError::Parse {
                row,
                column: col_idx + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        if has_labels {
            let column = values.len();
            let label = values.pop().ok_or_else(|| SscError::Parse {
                row,
                column,
                message: "missing label column".into(),
            })?;
            if label.fract() != 0.0 || !label.is_finite() {
                return Err(SscError::Parse {
                    row,
                    column,
                    message: format!("label {label} is not an integer"),
                });
            }
            raw_labels.push(label as i64);
        }
        points.push(values);
    }

    if has_labels && width == Some(1) {
        return Err(SscError::Shape("no feature columns besides the label".into()));
    }
    if points.len() < MIN_POINTS {
        return Err(SscError::Size {
            min: MIN_POINTS,
            got: points.len(),
        });
    }
    let x = DataMatrix::from_points(&points)?;
    let labels = has_labels.then(|| Labels::from_raw(&raw_labels));
    Ok((x, labels))
}

/// Writes one row per point, optionally followed by its label.
pub fn write_csv(writer: impl Write, x: &DataMatrix, labels: Option<&Labels>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.n() {
            return Err(SscError::Shape(format!(
                "{} labels for {} points",
                l.len(),
                x.n()
            )));
        }
    }
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut row: Vec<String> = Vec::with_capacity(x.dim() + 1);
    for j in 0..x.n() {
        row.clear();
        row.extend(x.point(j).iter().map(|v| v.to_string()));
        if let Some(l) = labels {
            row.push(l.get(j).to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, x: &DataMatrix, labels: Option<&Labels>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| SscError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(std::io::BufWriter::new(file), x, labels)
}
