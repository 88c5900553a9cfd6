use ssc_core::experiment::{
    aggregate, load_dataset, run_sweep, run_trial, run_trials, write_aggregate_csv, AggregateRow,
    DatasetSource, ExperimentConfig, LabeledData, Method, SweepAxis, SweepSpec,
};
use ssc_core::{compute_k_array, ssc_omp, MetricsReport, SyntheticSpec};

fn small_config() -> ExperimentConfig {
    let spec = SyntheticSpec {
        orthogonal: false,
        ..SyntheticSpec::new(6, 4, 30, 30, 21)
    };
    ExperimentConfig {
        dataset: DatasetSource::Synthetic(spec),
        n_clusters: 3,
        samples_per_cluster: Some(20),
        trials: 3,
        noise_sigma: 0.3,
        seed: 77,
        kmeans_restarts: 5,
        ..ExperimentConfig::default()
    }
}

fn data(cfg: &ExperimentConfig) -> LabeledData {
    load_dataset(&cfg.dataset).unwrap()
}

/// Wall-clock time is the only field allowed to differ between reruns.
fn masked(mut r: MetricsReport) -> MetricsReport {
    r.time_seconds = 0.0;
    r
}

fn masked_rows(rows: &[AggregateRow]) -> String {
    let rows: Vec<AggregateRow> = rows
        .iter()
        .cloned()
        .map(|mut r| {
            r.time = 0.0;
            r
        })
        .collect();
    let mut out = Vec::new();
    write_aggregate_csv(&mut out, &rows).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn sweeps_are_reproducible() {
    let cfg = small_config();
    let d = data(&cfg);
    let sweep = SweepSpec {
        axis: SweepAxis::K,
        values: vec![3.0, 6.0],
    };
    let a = run_sweep(&cfg, &sweep, &d, &Method::ALL).unwrap();
    let b = run_sweep(&cfg, &sweep, &d, &Method::ALL).unwrap();
    assert_eq!(a.rows.len(), 4);
    assert!(a.rows.iter().all(|r| r.status == "ok"));
    assert_eq!(masked_rows(&a.rows), masked_rows(&b.rows));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small_config();
    let d = data(&cfg);
    let run = |threads: usize| -> Vec<MetricsReport> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_trials(&cfg, &d))
            .into_iter()
            .map(|r| masked(r.unwrap()))
            .collect()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn methods_see_the_same_subsample_and_noise() {
    let cfg = small_config();
    let d = data(&cfg);
    for trial in 0..cfg.trials {
        let b = run_trial(&ExperimentConfig { method: Method::Omp, ..cfg.clone() }, &d, trial).unwrap();
        let a = run_trial(&ExperimentConfig { method: Method::AdaptiveOmp, ..cfg.clone() }, &d, trial).unwrap();
        assert_eq!(a.subsample_hash, b.subsample_hash);
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.n_points, 60);
    }
    let t0 = run_trial(&cfg, &d, 0).unwrap();
    let t1 = run_trial(&cfg, &d, 1).unwrap();
    assert_ne!(t0.subsample_hash, t1.subsample_hash);
}

#[test]
fn single_value_sweep_matches_run_trial() {
    let cfg = ExperimentConfig {
        trials: 1,
        ..small_config()
    };
    let d = data(&cfg);
    let sweep = SweepSpec {
        axis: SweepAxis::NoiseSigma,
        values: vec![cfg.noise_sigma],
    };
    let result = run_sweep(&cfg, &sweep, &d, &[cfg.method]).unwrap();
    let direct = run_trial(&cfg, &d, 0).unwrap();
    let from_sweep = result.reports[0][0].as_ref().unwrap().clone();
    assert_eq!(masked(from_sweep), masked(direct.clone()));

    let mut expected = aggregate(&cfg, &d.name, &[Ok(direct)]);
    expected.time = result.rows[0].time;
    assert_eq!(result.rows[0], expected);
}

#[test]
fn uniform_sizes_make_the_methods_agree() {
    // Identical points give equal scores, so every budget is k.
    let spec = SyntheticSpec::new(2, 1, 4, 6, 3);
    let mut cfg = ExperimentConfig {
        dataset: DatasetSource::Synthetic(spec),
        n_clusters: 2,
        k: 3,
        ..ExperimentConfig::default()
    };
    let mut d = data(&cfg);
    let dup = vec![0, 0, 0, 0, 0, 0, 6, 6, 6, 6, 6, 6];
    d.x = d.x.select(&dup).unwrap();
    assert_eq!(compute_k_array(&d.x, 3).unwrap().sizes, vec![3; 12]);

    cfg.method = Method::Omp;
    let b = run_trial(&cfg, &d, 0).unwrap();
    cfg.method = Method::AdaptiveOmp;
    let a = run_trial(&cfg, &d, 0).unwrap();
    let strip = |mut r: MetricsReport| {
        r.method.clear();
        masked(r)
    };
    assert_eq!(strip(a), strip(b));
}

#[test]
fn dictionary_sizes_cost_less_than_one_omp_pass() {
    let spec = SyntheticSpec {
        orthogonal: false,
        ..SyntheticSpec::new(8, 6, 80, 80, 5)
    };
    let (x, _) = ssc_core::generate_synthetic(&spec).unwrap();
    assert!(x.n() >= 500);
    let best = |f: &dyn Fn()| {
        (0..3)
            .map(|_| ssc_core::timed(f).1)
            .fold(f64::INFINITY, f64::min)
    };
    let sizes = best(&|| {
        compute_k_array(&x, 8).unwrap();
    });
    let omp = best(&|| {
        ssc_omp(&x, 8, 1e-6).unwrap();
    });
    assert!(sizes < omp, "dictionary sizes {sizes:.4}s, OMP {omp:.4}s");
}
