use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lattice-swarm"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn run_5x5_passes_and_writes_one_metrics_row() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("5x5.cfg");
    let o = run(&["run", s.to_str().unwrap(), "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("PASS seed=1 "));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "seed,success,completion_s,phase_r1_s,phase_r2_s,origin_corner,symmetry,msgs_sent,msgs_dropped");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,true,"));
}

#[test]
fn dead_channel_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("5x5.cfg");
    let o = run(&["run", s.to_str().unwrap(), "--drop", "1.0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stdout).starts_with("TIMEOUT"));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",false,"));
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let o = run(&["run", "no/such/scenario.cfg"]);
    assert_eq!(code(&o), 64);
    assert!(text(&o.stderr).contains("no/such/scenario.cfg"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&run(&["run"])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    let s = scenario("5x5.cfg");
    assert_eq!(code(&run(&["run", s.to_str().unwrap(), "--drop", "lots"])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn empty_seed_range_is_a_usage_error() {
    let s = scenario("5x5.cfg");
    let o = run(&["batch", s.to_str().unwrap(), "--seeds", "7..7"]);
    assert_eq!(code(&o), 64);
    assert!(text(&o.stderr).contains("empty"));
}

#[test]
fn batch_rows_are_in_seed_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("batch.csv");
    let s = scenario("5x5.cfg");
    let o = run(&["batch", s.to_str().unwrap(), "--seeds", "3..=8", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    let csv = fs::read_to_string(&out).unwrap();
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["3", "4", "5", "6", "7", "8"]);
    let summary = text(&o.stdout);
    assert!(summary.contains("runs = 6"));
    assert!(summary.contains("success_rate = 1.0000"));
    assert!(summary.contains("median_completion_s = "));
}

#[test]
fn hexagonal_scenario_classifies() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("hex-4-3-4.cfg");
    let o = run(&["run", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", text(&o.stdout), text(&o.stderr));
}

#[test]
fn verify_suites_pass() {
    let o = run(&["verify"]);
    assert_eq!(code(&o), 0);
    let out = text(&o.stdout);
    for suite in ["perimeter", "middle-closure", "radius-sweep"] {
        assert!(out.contains(&format!("PASS {suite}:")), "{out}");
    }
}

#[test]
fn verify_catches_a_mutated_perimeter_rule() {
    let o = run(&["verify", "--mutate-perimeter", "--max-side", "6"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stdout).contains("FAIL perimeter:"));
}

#[test]
fn out_of_range_eps_is_reported_without_failing() {
    let o = run(&["verify", "--eps", "0.1,0.35", "--max-side", "10"]);
    assert_eq!(code(&o), 0);
    let out = text(&o.stdout);
    assert!(out.contains("INFO eps 0.35: EPS_OUT_OF_RANGE"));
    assert!(out.contains("PASS radius-sweep:"));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![("metrics.csv".to_owned(), fs::read(dir.join("metrics.csv")).unwrap())];
    let mut frames: Vec<_> = fs::read_dir(dir.join("frames")).unwrap().map(|e| e.unwrap().path()).collect();
    frames.sort();
    for f in frames {
        files.push((f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()));
    }
    files
}

#[test]
fn identical_invocations_write_identical_files() {
    let s = scenario("25x8-repair-stress.cfg");
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let o = run(&["run", s.to_str().unwrap(), "--seed", "11", "--frames-every", "512", "--out", d.path().to_str().unwrap()]);
        assert!(matches!(code(&o), 0 | 1), "{}", text(&o.stderr));
    }
    let (a, b) = (snapshot(dirs[0].path()), snapshot(dirs[1].path()));
    assert!(a.len() > 3, "frames were written");
    assert!(a.iter().any(|(n, _)| n.ends_with(".ppm")));
    assert_eq!(a, b);
}
