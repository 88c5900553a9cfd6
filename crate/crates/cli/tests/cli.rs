use std::path::Path;
use std::process::{Command, Output};

fn ssc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssc"))
        .args(args)
        .current_dir(dir)
        .env("SSC_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Masks the wall-clock column of an aggregate CSV.
fn without_time(csv: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let t = header.iter().position(|&h| h == "time").unwrap();
    lines
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells[t] = "-";
            cells.join(",")
        })
        .collect()
}

#[test]
fn cluster_reports_json_lines_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssc(
        &["cluster", "--synthetic", "3,3,20,30,4", "--trials", "2", "--aggregate", "agg.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["accr"], 100.0);
    assert_eq!(lines[1]["trial"], 1);
    assert!(stderr(&out).contains("subsample"));
    let agg = std::fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert!(agg.starts_with("dataset,n,samples,K,eps,sigma,seed,method,accr,time,conn,perc,ssr,sea,trials,status"));
}

#[test]
fn sweep_is_reproducible_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--synthetic", "6,4,30,30,2", "--random-subspaces", "-n", "3", "--samples", "20",
        "--trials", "2", "--axis", "sigma", "--values", "0,0.3", "--kmeans-restarts", "5",
    ];
    let a = ssc(&[&args[..], &["--out", "a.csv", "--plot", "plot.csv"]].concat(), dir.path());
    let b = ssc(&[&args[..], &["--out", "b.csv"]].concat(), dir.path());
    assert!(a.status.success() && b.status.success(), "{}", stderr(&a));
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    assert_eq!(without_time(&read("a.csv")), without_time(&read("b.csv")));
    assert_eq!(read("a.csv").lines().count(), 5);
    assert_eq!(read("plot.csv").lines().next(), Some("x,series,value"));

    let cmp = ssc(&["compare", "a.csv"], dir.path());
    assert!(cmp.status.success(), "{}", stderr(&cmp));
    let table = stdout(&cmp);
    assert!(table.lines().next().unwrap().contains("d_accr"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "method = \"omp\"\nk = 4\nn_clusters = 2\ntrials = 1\n\n[dataset.synthetic]\n\
         n_subspaces = 2\nsubspace_dim = 2\nambient_dim = 8\npoints_per_subspace = 15\nrng_seed = 1\n",
    )
    .unwrap();
    let out = ssc(&["cluster", "--config", "exp.toml", "-k", "3"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["method"], "omp");
    assert_eq!(v["k"], 3);
    assert_eq!(v["n_points"], 30);
}

#[test]
fn data_tools_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = ssc(&["synth", "2,2,10,12,3", "--out", "syn.csv"], dir.path());
    assert!(s.status.success(), "{}", stderr(&s));
    let n = ssc(&["noise", "syn.csv", "--labels", "--sigma", "0.5", "--out", "noisy.csv"], dir.path());
    assert!(n.status.success(), "{}", stderr(&n));
    let noisy = std::fs::read_to_string(dir.path().join("noisy.csv")).unwrap();
    assert_eq!(noisy.lines().count(), 24);
    assert_eq!(noisy.lines().next().unwrap().split(',').count(), 11);

    let k = ssc(&["k-array", "noisy.csv", "--labels", "-k", "5"], dir.path());
    assert!(k.status.success(), "{}", stderr(&k));
    let table = stdout(&k);
    assert_eq!(table.lines().next(), Some("index,raw_mean,normalized,size,unclamped"));
    assert_eq!(table.lines().count(), 25);

    let c = ssc(&["cluster", "--data", "noisy.csv", "-n", "2", "-k", "4"], dir.path());
    assert!(c.status.success(), "{}", stderr(&c));
}

#[test]
fn trial_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // Budget of 40 exceeds the 28 available atoms.
    let out = ssc(&["cluster", "--synthetic", "2,2,10,15", "-k", "40", "--method", "omp"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("trial 0"), "{}", stderr(&out));

    let bad = ssc(&["cluster", "--data", "missing.csv"], dir.path());
    assert!(!bad.status.success());
    let bad = ssc(&["cluster", "--sigma", "2"], dir.path());
    assert!(!bad.status.success());
}
