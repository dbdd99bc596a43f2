use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_tileshuffle");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_clear()
        .envs(env.iter().copied())
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic bundle: 300 probes, one planted segment.
fn bundle() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--out",
        p(dir.path()),
        "--probes",
        "300",
        "--region-start",
        "1",
        "--segment",
        "2001-4001:0.9",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn manifest_value(dir: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(dir.join("run-manifest.tsv")).ok()?;
    text.lines()
        .filter_map(|l| l.split_once('\t'))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

#[test]
fn synth_writes_bundle_and_truth() {
    let b = bundle();
    for f in ["layout.tsv", "array_1.tsv", "array_2.tsv", "array_3.tsv", "truth.bed", "run-manifest.tsv"] {
        assert!(b.path().join(f).exists(), "{f}");
    }
    let bed = std::fs::read_to_string(b.path().join("truth.bed")).unwrap();
    assert_eq!(bed.trim(), "chr8\t2000\t4000\t0.9");
    assert_eq!(manifest_value(b.path(), "probes_written").as_deref(), Some("300"));
}

#[test]
fn detect_is_byte_identical_across_runs() {
    let b = bundle();
    let layout = b.path().join("layout.tsv");
    let array = b.path().join("array_1.tsv");
    let outs: Vec<TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for o in &outs {
        let r = run(&[
            "detect",
            "--layout",
            p(&layout),
            "--intensities",
            p(&array),
            "--seed",
            "7",
            "--permutations",
            "50",
            "--out",
            p(o.path()),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = std::fs::read(outs[0].path().join("regions_array_1.tsv")).unwrap();
    let b2 = std::fs::read(outs[1].path().join("regions_array_1.tsv")).unwrap();
    assert_eq!(a, b2);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("chrom\tstart\tend\tscore\tp\tq\n"));
    assert!(text.lines().count() >= 2, "the planted segment should be called");
}

#[test]
fn simulate_writes_per_sim_areas_and_manifest() {
    let b = bundle();
    let o = tempfile::tempdir().unwrap();
    let r = run(&[
        "simulate",
        "--bundle",
        p(b.path()),
        "--out",
        p(o.path()),
        "--sims",
        "3",
        "--permutations",
        "20",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest = std::fs::read_to_string(o.path().join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    for s in 0..3 {
        for a in 1..=3 {
            assert!(o.path().join(format!("sim_{s}_array_{a}_areas.tsv")).exists());
        }
    }
    assert_eq!(manifest_value(o.path(), "sims").as_deref(), Some("3"));
    assert_eq!(manifest_value(o.path(), "status").as_deref(), Some("ok"));
}

#[test]
fn environment_overrides_flags() {
    let b = bundle();
    let o = tempfile::tempdir().unwrap();
    let r = run_env(
        &["simulate", "--bundle", p(b.path()), "--out", p(o.path())],
        &[("TILESHUFFLE_SIMS", "2"), ("TILESHUFFLE_PERMUTATIONS", "10"), ("TILESHUFFLE_SEED", "99")],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(manifest_value(o.path(), "sims").as_deref(), Some("2"));
    assert_eq!(manifest_value(o.path(), "master_seed").as_deref(), Some("99"));
}

#[test]
fn fig1_and_sweep_write_tables_and_svg() {
    let b = bundle();
    let o = tempfile::tempdir().unwrap();
    let common = ["--bundle", p(b.path()), "--out", p(o.path()), "--sims", "2", "--permutations", "20", "--svg"];
    let mut fig1 = vec!["fig1", "--smooth-window", "5"];
    fig1.extend_from_slice(&common);
    assert!(run(&fig1).status.success());
    let mut sweep = vec!["sweep", "--ks", "1,2"];
    sweep.extend_from_slice(&common);
    assert!(run(&sweep).status.success());

    let fig = std::fs::read_to_string(o.path().join("fig1.tsv")).unwrap();
    assert!(fig.starts_with("area_index\tstart\tcount\tsmoothed\n"));
    let sw = std::fs::read_to_string(o.path().join("sweep.tsv")).unwrap();
    assert_eq!(sw.lines().count(), 3);
    for svg in ["fig1.svg", "sweep.svg"] {
        let text = std::fs::read_to_string(o.path().join(svg)).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn normalize_emits_one_column_per_array() {
    let b = bundle();
    let o = tempfile::tempdir().unwrap();
    let r = run(&["normalize", "--bundle", p(b.path()), "--out", p(o.path())]);
    assert!(r.status.success());
    let text = std::fs::read_to_string(o.path().join("normalized.tsv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("probe_id\treplicate\tarray_1\tarray_2\tarray_3"));
    assert_eq!(lines.count(), 300 * 10);
}

#[test]
fn missing_input_is_a_validation_error() {
    let o = tempfile::tempdir().unwrap();
    let r = run(&["detect", "--out", p(o.path())]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert_eq!(err.trim().lines().count(), 1);
    assert!(err.contains("--layout"));
    assert_eq!(manifest_value(o.path(), "status").as_deref(), Some("failed"));
}

#[test]
fn help_exits_0() {
    let r = run(&["--help"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("simulate"));
}

#[test]
fn unknown_and_conflicting_flags_exit_1() {
    let r = run(&["detect", "--out", "x", "--frobnicate"]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&r.stderr).trim().lines().count(), 1);
    let r = run(&["detect", "--out", "x", "--bundle", "b", "--layout", "l.tsv"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn bad_values_exit_1() {
    let b = bundle();
    let o = tempfile::tempdir().unwrap();
    let r = run(&["simulate", "--bundle", p(b.path()), "--out", p(o.path()), "--replicates", "11"]);
    assert_eq!(r.status.code(), Some(1));
    let r = run(&["synth", "--out", p(o.path()), "--probes", "100", "--segment", "oops"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn unreadable_input_exits_2() {
    let o = tempfile::tempdir().unwrap();
    let missing = o.path().join("nope");
    let r = run(&["simulate", "--bundle", p(&missing), "--out", p(o.path())]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn malformed_layout_reports_file_and_line() {
    let b = bundle();
    let layout = b.path().join("layout.tsv");
    let mut text = std::fs::read_to_string(&layout).unwrap();
    text.push_str("pX\tchr8\tabc\t0.5\t0\t0\n");
    std::fs::write(&layout, text).unwrap();
    let o = tempfile::tempdir().unwrap();
    let r = run(&["normalize", "--bundle", p(b.path()), "--out", p(o.path())]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("layout.tsv") && err.contains("line"), "{err}");
}
