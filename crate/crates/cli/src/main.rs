//! `ssc`: run, sweep and compare OMP-based subspace clustering experiments.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ssc_core::data::{add_gaussian_noise_with, normalize_columns, save_csv, write_csv};
use ssc_core::experiment::{
    aggregate, compare, load_dataset, read_aggregate_csv, run_sweep, run_trials, split_by_method,
    write_aggregate_csv, write_comparison_csv, write_plot_csv, Method, SweepAxis, SweepSpec,
};
use ssc_core::{generate_synthetic, load_csv, neighborhood_scores, MetricsReport, NoiseMode, SscError};

use config::{parse_synthetic, ExperimentArgs};

#[derive(Parser, Debug)]
#[command(name = "ssc", version, about)]
struct Cli {
    /// Worker threads (defaults to one per core)
    #[arg(long, global = true, env = "SSC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured trials and report per-trial metrics
    Cluster {
        #[command(flatten)]
        exp: ExperimentArgs,

        /// Per-trial JSON lines (stdout when omitted)
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,

        /// Aggregate CSV with the trial means
        #[arg(long, value_name = "FILE")]
        aggregate: Option<PathBuf>,
    },
    /// Vary one parameter and run every method at each value
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,

        /// n-clusters, k, samples or sigma
        #[arg(long)]
        axis: SweepAxis,

        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,

        #[arg(long, value_delimiter = ',', default_values = ["omp", "adaptive-omp"])]
        methods: Vec<Method>,

        /// Aggregate CSV (stdout when omitted)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,

        /// Long-format x,series,value CSV for plotting
        #[arg(long, value_name = "FILE")]
        plot: Option<PathBuf>,

        /// Per-trial JSON lines
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Pair baseline and adaptive rows of aggregate CSVs and report deltas
    Compare {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Per-point dictionary sizes of a data file
    KArray {
        input: PathBuf,

        /// The last column is a label and is ignored
        #[arg(long)]
        labels: bool,

        #[arg(short, long, default_value_t = 8)]
        k: usize,

        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write a synthetic union of subspaces as CSV (label last)
    Synth {
        /// SUBSPACES,DIM,AMBIENT,POINTS[,SEED]
        spec: String,

        #[arg(long)]
        random_subspaces: bool,

        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Normalize the columns of a CSV and add Gaussian noise
    Noise {
        input: PathBuf,

        #[arg(long)]
        labels: bool,

        #[arg(long)]
        sigma: f64,

        #[arg(long, default_value_t = 0.01)]
        variance: f64,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        #[arg(long, default_value = "columns")]
        mode: NoiseMode,

        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes JSON lines and logs every trial; returns the number of failures.
fn emit_reports<'a>(
    out: &mut dyn Write,
    results: impl IntoIterator<Item = &'a ssc_core::Result<MetricsReport>>,
) -> Result<usize> {
    let mut failures = 0;
    for r in results {
        match r {
            Ok(report) => {
                eprintln!(
                    "{} {} trial {} seed {} subsample {} accr {:.2}",
                    report.dataset, report.method, report.trial, report.seed, report.subsample_hash, report.accr
                );
                writeln!(out, "{}", report.to_json()?)?;
            }
            Err(e) => {
                failures += 1;
                eprintln!("error: {e}");
            }
        }
    }
    out.flush()?;
    Ok(failures)
}

fn cluster(exp: &ExperimentArgs, json: Option<&Path>, agg: Option<&Path>) -> Result<usize> {
    let cfg = exp.resolve()?;
    let data = load_dataset(&cfg.dataset)?;
    let results = run_trials(&cfg, &data);
    let failures = emit_reports(&mut *output(json)?, &results)?;
    if let Some(path) = agg {
        let row = aggregate(&cfg, &data.name, &results);
        write_aggregate_csv(output(Some(path))?, &[row])?;
    }
    Ok(failures)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    exp: &ExperimentArgs,
    axis: SweepAxis,
    values: Vec<f64>,
    methods: &[Method],
    out: Option<&Path>,
    plot: Option<&Path>,
    json: Option<&Path>,
) -> Result<usize> {
    let cfg = exp.resolve()?;
    let data = load_dataset(&cfg.dataset)?;
    let spec = SweepSpec { axis, values };
    let result = run_sweep(&cfg, &spec, &data, methods)?;
    let failures = match json {
        Some(path) => emit_reports(&mut *output(Some(path))?, result.reports.iter().flatten())?,
        None => emit_reports(&mut io::sink(), result.reports.iter().flatten())?,
    };
    write_aggregate_csv(output(out)?, &result.rows)?;
    if let Some(path) = plot {
        write_plot_csv(output(Some(path))?, &spec, &result.rows)?;
    }
    Ok(failures)
}

fn compare_files(inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for path in inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        rows.extend(read_aggregate_csv(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let (baseline, adaptive) = split_by_method(&rows);
    let table = compare(&baseline, &adaptive)?;
    let losses = table.iter().filter(|r| r.adaptive_loses).count();
    eprintln!("{} configurations, adaptive ACCR lower in {losses}", table.len());
    write_comparison_csv(output(out)?, &table)?;
    Ok(())
}

fn k_array(input: &Path, labels: bool, k: usize, out: Option<&Path>) -> Result<()> {
    let (x, _) = load_csv(input, labels)?;
    let x = normalize_columns(&x)?;
    let scores = neighborhood_scores(&x, k)?;
    let sizes = ssc_core::adaptive::k_array_from_scores(&scores, k);
    let mut w = output(out)?;
    writeln!(w, "index,raw_mean,normalized,size,unclamped")?;
    for i in 0..x.n() {
        writeln!(
            w,
            "{i},{},{},{},{}",
            scores.raw_mean[i], scores.normalized[i], sizes.sizes[i], sizes.unclamped[i]
        )?;
    }
    w.flush()?;
    eprintln!(
        "k {k}: mean size {:.3} (before clamping {:.3}), range {}..={}",
        sizes.mean(),
        sizes.unclamped_mean(),
        sizes.sizes.iter().min().copied().unwrap_or(0),
        sizes.sizes.iter().max().copied().unwrap_or(0)
    );
    Ok(())
}

fn synth(spec: &str, random: bool, out: Option<&Path>) -> Result<()> {
    let spec = parse_synthetic(spec, !random)?;
    let (x, labels) = generate_synthetic(&spec)?;
    match out {
        Some(path) => save_csv(path, &x, Some(&labels))?,
        None => write_csv(io::stdout().lock(), &x, Some(&labels))?,
    }
    Ok(())
}

fn noise(
    input: &Path,
    labels: bool,
    sigma: f64,
    variance: f64,
    seed: u64,
    mode: NoiseMode,
    out: Option<&Path>,
) -> Result<()> {
    let (x, l) = load_csv(input, labels)?;
    let x = add_gaussian_noise_with(&normalize_columns(&x)?, sigma, variance, seed, mode)?;
    match out {
        Some(path) => save_csv(path, &x, l.as_ref())?,
        None => write_csv(io::stdout().lock(), &x, l.as_ref())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<usize> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Cluster { exp, json, aggregate } => cluster(&exp, json.as_deref(), aggregate.as_deref()),
        Command::Sweep {
            exp,
            axis,
            values,
            methods,
            out,
            plot,
            json,
        } => sweep(&exp, axis, values, &methods, out.as_deref(), plot.as_deref(), json.as_deref()),
        Command::Compare { inputs, out } => compare_files(&inputs, out.as_deref()).map(|_| 0),
        Command::KArray { input, labels, k, out } => k_array(&input, labels, k, out.as_deref()).map(|_| 0),
        Command::Synth {
            spec,
            random_subspaces,
            out,
        } => synth(&spec, random_subspaces, out.as_deref()).map(|_| 0),
        Command::Noise {
            input,
            labels,
            sigma,
            variance,
            seed,
            mode,
            out,
        } => noise(&input, labels, sigma, variance, seed, mode, out.as_deref()).map(|_| 0),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} trial(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<SscError>() {
                Some(SscError::Io { .. }) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
