//! Experiment flags layered over an optional TOML file over the defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ssc_core::experiment::{DatasetSource, ExperimentConfig, Method};
use ssc_core::{NoiseMode, SyntheticSpec};

#[derive(Args, Debug, Clone, Default)]
pub struct ExperimentArgs {
    /// TOML file with any `ExperimentConfig` fields; flags win over it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Row-per-point CSV whose last column is the class label
    #[arg(long, value_name = "CSV", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,

    /// Synthetic union of subspaces: SUBSPACES,DIM,AMBIENT,POINTS[,SEED]
    #[arg(long, value_name = "SPEC")]
    pub synthetic: Option<String>,

    /// Draw independent random subspaces instead of mutually orthogonal ones
    #[arg(long, requires = "synthetic")]
    pub random_subspaces: bool,

    /// omp or adaptive-omp
    #[arg(long)]
    pub method: Option<Method>,

    /// Base dictionary size
    #[arg(short, long)]
    pub k: Option<usize>,

    /// OMP residual threshold
    #[arg(long)]
    pub eps: Option<f64>,

    /// Clusters drawn per trial
    #[arg(short, long)]
    pub n_clusters: Option<usize>,

    #[arg(long)]
    pub trials: Option<usize>,

    /// Points drawn per cluster; all points when omitted
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,

    /// Noise rate in [0, 1]
    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long)]
    pub noise_variance: Option<f64>,

    /// columns or blend
    #[arg(long)]
    pub noise_mode: Option<NoiseMode>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub kmeans_restarts: Option<usize>,

    #[arg(long)]
    pub kmeans_max_iters: Option<usize>,
}

pub fn parse_synthetic(spec: &str, orthogonal: bool) -> Result<SyntheticSpec> {
    let parts: Vec<u64> = spec
        .split(',')
        .map(|p| p.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("synthetic spec {spec:?} must be comma-separated integers"))?;
    let (dims, seed) = match parts.as_slice() {
        [a, b, c, d] => ([*a, *b, *c, *d], 0),
        [a, b, c, d, s] => ([*a, *b, *c, *d], *s),
        _ => bail!("synthetic spec {spec:?} needs SUBSPACES,DIM,AMBIENT,POINTS[,SEED]"),
    };
    let [n, d, ambient, points] = dims.map(|v| v as usize);
    Ok(SyntheticSpec {
        orthogonal,
        ..SyntheticSpec::new(n, d, ambient, points, seed)
    })
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.data {
            cfg.dataset = DatasetSource::Csv { path: path.clone() };
        }
        if let Some(spec) = &self.synthetic {
            let spec = parse_synthetic(spec, !self.random_subspaces)?;
            if self.n_clusters.is_none() && self.config.is_none() {
                cfg.n_clusters = spec.n_subspaces;
            }
            cfg.dataset = DatasetSource::Synthetic(spec);
        }
        macro_rules! merge {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        merge!(
            method => method,
            k => k,
            eps => eps,
            n_clusters => n_clusters,
            trials => trials,
            sigma => noise_sigma,
            noise_variance => noise_variance,
            noise_mode => noise_mode,
            seed => seed,
            kmeans_restarts => kmeans_restarts,
            kmeans_max_iters => kmeans_max_iters,
        );
        if self.samples.is_some() {
            cfg.samples_per_cluster = self.samples;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
