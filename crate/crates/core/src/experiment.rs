//! Experiment orchestration: single trials, repeated trials, parameter sweeps
//! and paired baseline/adaptive comparisons.
//!
//! Every trial draws its seed from `(master seed, trial index)`. The cluster
//! and point subsample, the noise and the k-means seeds all derive from the
//! trial seed and never from the method, so the two methods are always
//! compared on identical inputs.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::compute_k_array;
use crate::data::{add_gaussian_noise_with, generate_synthetic, load_csv, DataMatrix, Labels, NoiseMode, SyntheticSpec};
use crate::error::{Result, SscError};
use crate::metrics::{
    accuracy, connectivity, sea_ratio, subspace_preserving_error, subspace_preserving_rate, timed,
    MetricsReport,
};
use crate::omp::{ssc_omp, ssc_omp_adaptive};
use crate::seed::{derive_seed, stream_rng};
use crate::spectral::{build_affinity, spectral_cluster, SpectralConfig};

const STREAM_SUBSAMPLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_KMEANS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Omp,
    AdaptiveOmp,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Omp, Method::AdaptiveOmp];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Omp => "omp",
            Method::AdaptiveOmp => "adaptive-omp",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(Method::Omp),
            "adaptive-omp" | "adaptive" => Ok(Method::AdaptiveOmp),
            other => Err(SscError::Range(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    /// Row-per-point CSV whose last column is the class label.
    Csv { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub method: Method,
    pub k: usize,
    pub eps: f64,
    pub n_clusters: usize,
    pub trials: usize,
    pub samples_per_cluster: Option<usize>,
    pub noise_sigma: f64,
    pub noise_variance: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::new(5, 5, 50, 100, 0)),
            method: Method::AdaptiveOmp,
            k: 8,
            eps: 1e-6,
            n_clusters: 5,
            trials: 1,
            samples_per_cluster: None,
            noise_sigma: 0.0,
            noise_variance: 0.01,
            noise_mode: NoiseMode::Columns,
            seed: 0,
            kmeans_restarts: 20,
            kmeans_max_iters: 300,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(SscError::Range("trials must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(SscError::Budget("k must be positive".into()));
        }
        if self.n_clusters < 2 {
            return Err(SscError::Range("n_clusters must be at least 2".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(SscError::Range(format!("eps {} must be nonnegative", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.noise_sigma) {
            return Err(SscError::Range(format!("noise sigma {} not in [0, 1]", self.noise_sigma)));
        }
        if self.samples_per_cluster == Some(0) {
            return Err(SscError::Range("samples_per_cluster must be positive".into()));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 {
            return Err(SscError::Range("k-means restarts and iterations must be positive".into()));
        }
        Ok(())
    }
}

/// A data matrix with ground truth, loaded once and shared by all trials.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub name: String,
    pub x: DataMatrix,
    pub labels: Labels,
}

pub fn load_dataset(source: &DatasetSource) -> Result<LabeledData> {
    match source {
        DatasetSource::Csv { path } => {
            let (x, labels) = load_csv(path, true)?;
            let name = path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok(LabeledData {
                name,
                x,
                labels: labels.expect("labels requested"),
            })
        }
        DatasetSource::Synthetic(spec) => {
            let (x, labels) = generate_synthetic(spec)?;
            let name = format!(
                "synthetic-{}x{}d-in-{}{}",
                spec.n_subspaces,
                spec.subspace_dim,
                spec.ambient_dim,
                if spec.orthogonal { "" } else { "-random" }
            );
            Ok(LabeledData { name, x, labels })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    /// Selected point indices into the full dataset.
    pub indices: Vec<usize>,
    /// Labels of the selected points, renumbered `0..n_clusters`.
    pub labels: Labels,
    pub hash: String,
}

/// Picks `n_clusters` classes without replacement, then either all of their
/// points or `samples_per_cluster` random points from each.
pub fn subsample(
    labels: &Labels,
    n_clusters: usize,
    samples_per_cluster: Option<usize>,
    seed: u64,
) -> Result<Subsample> {
    let available = labels.n_clusters();
    if n_clusters > available {
        return Err(SscError::Range(format!(
            "{n_clusters} clusters requested, dataset has {available}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_SUBSAMPLE);
    let mut chosen = index::sample(&mut rng, available, n_clusters).into_vec();
    chosen.sort_unstable();

    let members = labels.members();
    let mut indices = Vec::new();
    let mut sub_labels = Vec::new();
    for (new_id, &cluster) in chosen.iter().enumerate() {
        let pool = &members[cluster];
        let picked: Vec<usize> = match samples_per_cluster {
            None => pool.clone(),
            Some(s) if s > pool.len() => {
                return Err(SscError::Range(format!(
                    "cluster {cluster} has {} points, {s} requested",
                    pool.len()
                )));
            }
            Some(s) => {
                let mut pos = index::sample(&mut rng, pool.len(), s).into_vec();
                pos.sort_unstable();
                pos.into_iter().map(|p| pool[p]).collect()
            }
        };
        sub_labels.extend(std::iter::repeat_n(new_id, picked.len()));
        indices.extend(picked);
    }

    let mut hasher = Sha256::new();
    for i in &indices {
        hasher.update((*i as u64).to_le_bytes());
    }
    let hash = hasher.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();

    Ok(Subsample {
        indices,
        labels: Labels::new(sub_labels, n_clusters)?,
        hash,
    })
}

/// Runs one trial end to end. TIME covers the dictionary sizes (adaptive
/// only), OMP, the affinity and spectral clustering; data loading,
/// subsampling, noise and metric evaluation are excluded.
pub fn run_trial(cfg: &ExperimentConfig, data: &LabeledData, trial: usize) -> Result<MetricsReport> {
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    run_trial_inner(cfg, data, trial, trial_seed).map_err(|e| SscError::Trial {
        dataset: data.name.clone(),
        seed: cfg.seed,
        trial,
        source: Box::new(e),
    })
}

fn run_trial_inner(cfg: &ExperimentConfig, data: &LabeledData, trial: usize, trial_seed: u64) -> Result<MetricsReport> {
    cfg.validate()?;
    let sub = subsample(&data.labels, cfg.n_clusters, cfg.samples_per_cluster, trial_seed)?;
    let x = data.x.select(&sub.indices)?;
    let x = add_gaussian_noise_with(
        &x,
        cfg.noise_sigma,
        cfg.noise_variance,
        derive_seed(trial_seed, STREAM_NOISE),
        cfg.noise_mode,
    )?;
    let spectral = SpectralConfig {
        n_clusters: cfg.n_clusters,
        kmeans_restarts: cfg.kmeans_restarts,
        kmeans_max_iters: cfg.kmeans_max_iters,
        rng_seed: derive_seed(trial_seed, STREAM_KMEANS),
    };

    let (outcome, time_seconds) = timed(|| -> Result<_> {
        let coef = match cfg.method {
            Method::Omp => ssc_omp(&x, cfg.k, cfg.eps)?,
            Method::AdaptiveOmp => {
                let k_array = compute_k_array(&x, cfg.k)?;
                ssc_omp_adaptive(&x, &k_array, cfg.eps)?
            }
        };
        let affinity = build_affinity(&coef);
        let pred = spectral_cluster(&affinity, &spectral)?;
        Ok((coef, affinity, pred))
    });
    let (coef, affinity, pred) = outcome?;

    let truth = &sub.labels;
    Ok(MetricsReport {
        dataset: data.name.clone(),
        method: cfg.method.to_string(),
        n_clusters: cfg.n_clusters,
        samples_per_cluster: cfg.samples_per_cluster,
        n_points: x.n(),
        k: cfg.k,
        eps: cfg.eps,
        sigma: cfg.noise_sigma,
        seed: trial_seed,
        trial,
        subsample_hash: sub.hash,
        accr: accuracy(&pred, truth)?,
        time_seconds,
        conn: connectivity(&affinity, truth)?,
        perc: subspace_preserving_rate(&coef, truth)?,
        ssr: subspace_preserving_error(&coef, truth)?,
        sea: sea_ratio(&coef).ok(),
    })
}

/// All trials of one configuration, in trial order.
pub fn run_trials(cfg: &ExperimentConfig, data: &LabeledData) -> Vec<Result<MetricsReport>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, data, t))
        .collect()
}

/// Mean over trials of every metric, one row per (configuration, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub n: usize,
    pub samples: Option<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    pub eps: f64,
    pub sigma: f64,
    pub seed: u64,
    pub method: String,
    pub accr: f64,
    pub time: f64,
    pub conn: f64,
    pub perc: f64,
    pub ssr: f64,
    pub sea: f64,
    /// Trials that completed.
    pub trials: usize,
    /// `ok`, or the first failure.
    pub status: String,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

pub fn aggregate(cfg: &ExperimentConfig, dataset: &str, results: &[Result<MetricsReport>]) -> AggregateRow {
    let ok: Vec<&MetricsReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures: Vec<String> = results
        .iter()
        .filter_map(|r| r.as_ref().err().map(ToString::to_string))
        .collect();
    let status = match failures.first() {
        None => "ok".to_string(),
        Some(first) => format!("failed {}/{}: {first}", failures.len(), results.len()),
    };
    AggregateRow {
        dataset: dataset.to_string(),
        n: cfg.n_clusters,
        samples: cfg.samples_per_cluster,
        k: cfg.k,
        eps: cfg.eps,
        sigma: cfg.noise_sigma,
        seed: cfg.seed,
        method: cfg.method.to_string(),
        accr: mean(ok.iter().map(|r| r.accr)),
        time: mean(ok.iter().map(|r| r.time_seconds)),
        conn: mean(ok.iter().map(|r| r.conn)),
        perc: mean(ok.iter().map(|r| r.perc)),
        ssr: mean(ok.iter().map(|r| r.ssr)),
        sea: mean(ok.iter().filter_map(|r| r.sea)),
        trials: ok.len(),
        status,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    NClusters,
    K,
    SamplesPerCluster,
    NoiseSigma,
}

impl std::str::FromStr for SweepAxis {
    type Err = SscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n-clusters" | "n_clusters" | "n" => Ok(Self::NClusters),
            "k" | "K" => Ok(Self::K),
            "samples-per-cluster" | "samples_per_cluster" | "samples" => Ok(Self::SamplesPerCluster),
            "noise-sigma" | "noise_sigma" | "sigma" => Ok(Self::NoiseSigma),
            other => Err(SscError::Range(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(SscError::Range("sweep needs at least one value".into()));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::NoiseSigma => (0.0..=1.0).contains(&v),
                SweepAxis::NClusters => v >= 2.0 && v.fract() == 0.0,
                SweepAxis::K | SweepAxis::SamplesPerCluster => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(SscError::Range(format!(
                    "value {v} is outside the domain of axis {:?}",
                    self.axis
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, base: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self.axis {
            SweepAxis::NClusters => cfg.n_clusters = value as usize,
            SweepAxis::K => cfg.k = value as usize,
            SweepAxis::SamplesPerCluster => cfg.samples_per_cluster = Some(value as usize),
            SweepAxis::NoiseSigma => cfg.noise_sigma = value,
        }
        cfg
    }

    pub fn value_of(&self, row: &AggregateRow) -> f64 {
        match self.axis {
            SweepAxis::NClusters => row.n as f64,
            SweepAxis::K => row.k as f64,
            SweepAxis::SamplesPerCluster => row.samples.map_or(f64::NAN, |s| s as f64),
            SweepAxis::NoiseSigma => row.sigma,
        }
    }
}

#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<AggregateRow>,
    /// Per-trial reports, grouped in the same order as `rows`.
    pub reports: Vec<Vec<Result<MetricsReport>>>,
}

/// One aggregate row per sweep value per method. Failed trials are recorded
/// in the row's status and the sweep moves on.
pub fn run_sweep(
    base: &ExperimentConfig,
    sweep: &SweepSpec,
    data: &LabeledData,
    methods: &[Method],
) -> Result<SweepResult> {
    sweep.validate()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &value in &sweep.values {
        for &method in methods {
            let mut cfg = sweep.apply(base, value);
            cfg.method = method;
            let results = run_trials(&cfg, data);
            rows.push(aggregate(&cfg, &data.name, &results));
            reports.push(results);
        }
    }
    Ok(SweepResult { rows, reports })
}

pub fn write_aggregate_csv(writer: impl Write, rows: &[AggregateRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
    Ok(())
}

pub fn read_aggregate_csv(reader: impl Read) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(SscError::from)).collect()
}

/// Long-format `x,series,value` rows for external plotting; the series is
/// `method:metric`.
pub fn write_plot_csv(writer: impl Write, sweep: &SweepSpec, rows: &[AggregateRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["x", "series", "value"])?;
    for row in rows {
        let x = sweep.value_of(row);
        for (metric, v) in [
            ("accr", row.accr),
            ("time", row.time),
            ("conn", row.conn),
            ("perc", row.perc),
            ("ssr", row.ssr),
            ("sea", row.sea),
        ] {
            wtr.write_record([x.to_string(), format!("{}:{metric}", row.method), v.to_string()])?;
        }
    }
    wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
    Ok(())
}

/// Adaptive minus baseline for one matched configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub n: usize,
    pub samples: Option<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    pub eps: f64,
    pub sigma: f64,
    pub seed: u64,
    pub accr_baseline: f64,
    pub accr_adaptive: f64,
    pub d_accr: f64,
    pub d_time: f64,
    pub d_conn: f64,
    pub d_perc: f64,
    pub d_ssr: f64,
    pub d_sea: f64,
    /// `time_adaptive / time_baseline`.
    pub time_ratio: f64,
    /// Adaptive ACCR below baseline.
    pub adaptive_loses: bool,
}

type RowKey = (String, usize, Option<usize>, usize, u64, u64, u64);

fn row_key(r: &AggregateRow) -> RowKey {
    (
        r.dataset.clone(),
        r.n,
        r.samples,
        r.k,
        r.eps.to_bits(),
        r.sigma.to_bits(),
        r.seed,
    )
}

/// Pairs rows by configuration and reports per-metric deltas. Both inputs
/// must cover exactly the same configurations.
pub fn compare(baseline: &[AggregateRow], adaptive: &[AggregateRow]) -> Result<Vec<ComparisonRow>> {
    let mut base_keys: Vec<RowKey> = baseline.iter().map(row_key).collect();
    let mut adapt_keys: Vec<RowKey> = adaptive.iter().map(row_key).collect();
    base_keys.sort();
    adapt_keys.sort();
    if base_keys != adapt_keys {
        return Err(SscError::Contract(
            "baseline and adaptive reports cover different sweep configurations".into(),
        ));
    }
    if base_keys.windows(2).any(|w| w[0] == w[1]) {
        return Err(SscError::Contract("duplicate configuration rows".into()));
    }

    Ok(baseline
        .iter()
        .map(|b| {
            let key = row_key(b);
            let a = adaptive
                .iter()
                .find(|a| row_key(a) == key)
                .expect("key sets are equal");
            let d_accr = a.accr - b.accr;
            ComparisonRow {
                dataset: b.dataset.clone(),
                n: b.n,
                samples: b.samples,
                k: b.k,
                eps: b.eps,
                sigma: b.sigma,
                seed: b.seed,
                accr_baseline: b.accr,
                accr_adaptive: a.accr,
                d_accr,
                d_time: a.time - b.time,
                d_conn: a.conn - b.conn,
                d_perc: a.perc - b.perc,
                d_ssr: a.ssr - b.ssr,
                d_sea: a.sea - b.sea,
                time_ratio: a.time / b.time,
                adaptive_loses: d_accr < 0.0,
            }
        })
        .collect())
}

/// Splits a mixed aggregate into `(baseline, adaptive)` rows by method.
pub fn split_by_method(rows: &[AggregateRow]) -> (Vec<AggregateRow>, Vec<AggregateRow>) {
    let baseline = rows
        .iter()
        .filter(|r| r.method == Method::Omp.to_string())
        .cloned()
        .collect();
    let adaptive = rows
        .iter()
        .filter(|r| r.method == Method::AdaptiveOmp.to_string())
        .cloned()
        .collect();
    (baseline, adaptive)
}

pub fn write_comparison_csv(writer: impl Write, rows: &[ComparisonRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| SscError::Csv(e.into()))?;
    Ok(())
}
