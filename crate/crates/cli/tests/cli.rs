use std::path::Path;
use std::process::{Command, Output};

fn rise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rise(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn summary(metrics: &str, name: &str) -> f64 {
    metrics
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["metric"] == name)
        .and_then(|v| v["value"].as_f64())
        .unwrap_or_else(|| panic!("no {name} in metrics"))
}

#[test]
fn planted_pipeline_reaches_target_auprc() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pool = d.join("pool");
    ok(&[
        "gen-synthetic",
        "--n",
        "500",
        "--t",
        "8",
        "--v",
        "1000",
        "--d",
        "32",
        "--kstore",
        "64",
        "--seed",
        "42",
        "--planted",
        "50:1.0",
        "-o",
        p(&pool),
    ]);
    for f in [
        "readout.bin",
        "pool.dump",
        "queries.dump",
        "labels.tsv",
        "manifest.json",
    ] {
        assert!(pool.join(f).exists(), "{f}");
    }
    let (ro, idx, qidx) = (pool.join("readout.bin"), d.join("pool.idx"), d.join("q.idx"));
    ok(&["build-index", p(&ro), p(&pool.join("pool.dump")), "-o", p(&idx)]);
    ok(&["build-index", p(&ro), p(&pool.join("queries.dump")), "-o", p(&qidx)]);
    let out = d.join("out");
    ok(&[
        "query",
        p(&idx),
        p(&qidx),
        "-o",
        p(&out),
        "--topk",
        "50",
        "--bottomk",
        "50",
    ]);
    assert_eq!(
        std::fs::read_to_string(out.join("topk.tsv")).unwrap().lines().count(),
        51
    );
    assert_eq!(
        std::fs::read_to_string(out.join("bottomk.tsv"))
            .unwrap()
            .lines()
            .count(),
        51
    );
    let metrics = d.join("metrics.jsonl");
    ok(&[
        "eval",
        p(&out.join("scores.tsv")),
        p(&pool.join("labels.tsv")),
        "--ks",
        "5,10,50",
        "-o",
        p(&metrics),
    ]);
    let text = std::fs::read_to_string(&metrics).unwrap();
    let ap50 = summary(&text, "auprc@50");
    assert!(ap50 >= 0.9, "auPRC@50 = {ap50}");
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["query_id", "k", "auprc", "auroc"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("metrics.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn rebuilds_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "gen-synthetic",
        "--n",
        "60",
        "--t",
        "4",
        "--v",
        "200",
        "--d",
        "16",
        "--kstore",
        "16",
        "--planted",
        "6:1.0",
        "--queries",
        "3",
        "-o",
        p(d),
    ]);
    let (ro, dump) = (d.join("readout.bin"), d.join("pool.dump"));
    ok(&[
        "--threads",
        "1",
        "build-index",
        p(&ro),
        p(&dump),
        "-o",
        p(&d.join("a.idx")),
    ]);
    ok(&[
        "--threads",
        "4",
        "build-index",
        p(&ro),
        p(&dump),
        "-o",
        p(&d.join("b.idx")),
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_rise"))
        .env("RISE_THREADS", "3")
        .args(["build-index", p(&ro), p(&dump), "-o", p(&d.join("c.idx"))])
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(d.join("a.idx")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.idx")).unwrap());
    assert_eq!(a, std::fs::read(d.join("c.idx")).unwrap());
}

#[test]
fn mismatched_readout_dims_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&[
        "gen-synthetic",
        "--n",
        "10",
        "--t",
        "2",
        "--v",
        "50",
        "--d",
        "8",
        "--kstore",
        "8",
        "-o",
        p(&a),
    ]);
    ok(&[
        "gen-synthetic",
        "--n",
        "10",
        "--t",
        "2",
        "--v",
        "50",
        "--d",
        "12",
        "--kstore",
        "8",
        "-o",
        p(&b),
    ]);
    let out = rise(&[
        "build-index",
        p(&b.join("readout.bin")),
        p(&a.join("pool.dump")),
        "-o",
        p(&dir.path().join("x.idx")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hidden dimension d"), "{err}");
}

#[test]
fn corrupt_and_unknown_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "gen-synthetic",
        "--n",
        "10",
        "--t",
        "2",
        "--v",
        "50",
        "--d",
        "8",
        "--kstore",
        "8",
        "-o",
        p(d),
    ]);
    let dump = std::fs::read(d.join("pool.dump")).unwrap();
    std::fs::write(d.join("short.dump"), &dump[..dump.len() - 5]).unwrap();
    let out = rise(&[
        "build-index",
        p(&d.join("readout.bin")),
        p(&d.join("short.dump")),
        "-o",
        p(&d.join("x.idx")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = rise(&[
        "build-index",
        p(&d.join("readout.bin")),
        p(&d.join("missing.dump")),
        "-o",
        p(&d.join("x.idx")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(rise(&["index-stats", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(rise(&["varbench", "--scenario", "svd"]).status.code(), Some(1));
    assert_eq!(rise(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_shows_default_hyperparameters() {
    let out = ok(&["build-index", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for default in [
        "[default: 0.7]",
        "[default: 1]",
        "[default: 0.92]",
        "[default: 4]",
        "[default: 256]",
        "[default: 42]",
        "--no-normalize",
    ] {
        assert!(help.contains(default), "missing {default} in\n{help}");
    }
}

#[test]
fn varbench_truncation_identity_passes() {
    let out = ok(&["varbench", "--scenario", "truncation_l1", "--trials", "1000"]);
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["verdict"], "PASS");
    let max_err = rec["checks"][0]["observed"].as_f64().unwrap();
    assert!(max_err <= 1e-6);
}

#[test]
fn index_stats_reports_consistent_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "gen-synthetic",
        "--n",
        "12",
        "--t",
        "2",
        "--v",
        "80",
        "--d",
        "8",
        "--kstore",
        "8",
        "-o",
        p(d),
    ]);
    ok(&[
        "build-index",
        p(&d.join("readout.bin")),
        p(&d.join("pool.dump")),
        "-o",
        p(&d.join("x.idx")),
        "--kr",
        "16",
        "--kh",
        "4",
        "--kg",
        "8",
    ]);
    let out = ok(&["index-stats", p(&d.join("x.idx"))]);
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["samples"], 12);
    assert_eq!(rec["floats_per_sample"], 16 * 4 + 8 * 4);
    assert_eq!(rec["file_bytes"], 48 + 12 * (8 + 4 * 96));
    assert_eq!(rec["file_bytes"], rec["expected_file_bytes"]);
}

#[test]
fn diagnose_on_full_vocabulary_dump() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "gen-synthetic",
        "--n",
        "10",
        "--t",
        "3",
        "--v",
        "64",
        "--d",
        "8",
        "--kstore",
        "64",
        "-o",
        p(d),
    ]);
    let out = ok(&[
        "diagnose",
        p(&d.join("readout.bin")),
        p(&d.join("pool.dump")),
        "--ks",
        "4,16,64",
    ]);
    let rows: Vec<serde_json::Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    let full = &rows[2];
    assert!((full["prob_mass"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((full["gh_cosine"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    ok(&[
        "gen-synthetic",
        "--n",
        "5",
        "--t",
        "2",
        "--v",
        "64",
        "--d",
        "8",
        "--kstore",
        "8",
        "-o",
        p(&d.join("partial")),
    ]);
    let out = rise(&[
        "diagnose",
        p(&d.join("partial/readout.bin")),
        p(&d.join("partial/pool.dump")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
