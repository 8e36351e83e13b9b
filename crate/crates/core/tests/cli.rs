use std::fs;
use std::process::{Command, Output};

use omega_lab::sieve::OmegaTable;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omega-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON summary on stdout")
}

#[test]
fn equidist_passes_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("e.csv");
    let js = dir.path().join("e.json");
    let out = run(&[
        "equidist", "--n-max", "100000", "--modulus", "2", "--checkpoints", "1000,10000",
        "--out-csv", csv.to_str().unwrap(), "--out-json", js.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
    let body = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "series,N,re,im,predicted_re,predicted_im,deviation");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("residue=0,1000,"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&js).unwrap()).unwrap();
    assert_eq!(summary, json(&out));
    assert_eq!(summary["verdict"], "PASS");
    assert_eq!(summary["config"]["modulus"], "2");
}

#[test]
fn failing_tolerance_exits_one() {
    let out = run(&["equidist", "--n-max", "100000", "--modulus", "5", "--tolerance", "0.001"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["verdict"], "FAIL");
}

#[test]
fn csv_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for threads in ["1", "8"] {
        let csv = dir.path().join(format!("t{threads}.csv"));
        let out = run(&[
            "double-average", "--n-max", "300000", "--checkpoints", "1000,70000",
            "--threads", threads, "--out-csv", csv.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        bodies.push(fs::read(&csv).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn summary_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let js = dir.path().join("s.json");
    let first = run(&["disjointness", "--n-max", "20000", "--weight", "eigen:1/4", "--tolerance", "0.5", "--out-json", js.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let again = run(&["run", "--config", js.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(json(&first), json(&again));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "kind = liouville-beatty\nn-max = 50000\nalpha = 3/2\n").unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--n-max", "40000"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    assert_eq!(s["config"]["n-max"], "40000");
    assert_eq!(s["config"]["alpha"], "3/2");
    assert_eq!(s["kind"], "liouville-beatty");
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "n-max = 10\n\nthis is not a pair\n").unwrap();
    let out = run(&["equidist", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn bad_values_are_usage_errors() {
    assert_eq!(run(&["equidist", "--tolerance", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["equidist", "--weight", "phase:1/3"]).status.code(), Some(2));
    assert_eq!(run(&["q2-probe", "--shift", "3"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    let big = run(&["equidist", "--n-max", "1e12"]);
    assert_eq!(big.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&big.stderr).contains("required limit is 1000000000000"));
}

#[test]
fn sieve_cache_is_written_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("omega.bin");
    let c = cache.to_str().unwrap();
    let out = run(&["sieve", "--limit", "100000", "--sieve-cache", c]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    assert_eq!(s["prime_count"], 9592);
    assert_eq!(s["verdict"], serde_json::Value::Null);
    let t = OmegaTable::load(&cache).unwrap();
    assert_eq!(t.limit(), 100_000);
    assert_eq!(t.omega(1 << 16).unwrap(), 16);
    // a smaller run reuses the cache untouched
    let before = fs::metadata(&cache).unwrap().modified().unwrap();
    let small = run(&["q2-probe", "--n-max", "5000", "--sieve-cache", c]);
    assert_eq!(small.status.code(), Some(0));
    assert_eq!(fs::metadata(&cache).unwrap().modified().unwrap(), before);
    // a larger run grows it
    let big = run(&["double-average", "--n-max", "200000", "--sieve-cache", c]);
    assert_eq!(big.status.code(), Some(0));
    assert_eq!(OmegaTable::load(&cache).unwrap().limit(), 200_000);
}

#[test]
fn orthogonality_constant_sequence_has_no_verdict() {
    let out = run(&["orthogonality", "--sequence", "const:0", "--n-max", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    assert_eq!(s["verdict"], serde_json::Value::Null);
    assert_eq!(s["report"]["mean_norm"], 1.0);
    assert_eq!(s["report"]["prime_pairs"].as_array().unwrap().len(), 10);
}

#[test]
fn pattern_search_from_file_and_generator() {
    let out = run(&["pattern-search", "--set-gen", "full", "--limit", "100", "--d-max", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    assert_eq!(s["witness"], serde_json::json!({"base": 1, "d": 1, "legs": [1, 2, 1]}));

    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("evens.txt");
    let mut text = String::from("limit=100\n");
    for n in (2..=100).step_by(2) {
        text.push_str(&format!("{n}\n"));
    }
    fs::write(&set, text).unwrap();
    let out = run(&["pattern-search", "--set", set.to_str().unwrap(), "--d-max", "20", "--n-max", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    assert_eq!(s["witness"]["base"], 2);
    assert_eq!(s["witness"]["d"], 4);
    assert_eq!(s["banach_estimate"], "1/2");

    fs::write(&set, "limit=10\n3\n12\n").unwrap();
    let bad = run(&["pattern-search", "--set", set.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));

    let grid = run(&["pattern-search", "--set-gen", "full", "--limit", "20,20", "--layout", "split-axes", "--d-max", "5"]);
    assert_eq!(grid.status.code(), Some(0));
    assert_eq!(json(&grid)["witness"]["base"], serde_json::json!([1, 1]));
}

#[test]
fn q2_probe_densities_sum_to_one() {
    let out = run(&["q2-probe", "--n-max", "100000", "--modulus", "3", "--shift", "-1"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    let sum: f64 = s["densities"].as_array().unwrap().iter().map(|d| d.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn help_documents_grammar() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["omega-beatty:a=", "phase:q1", "cyclic:K", "set-gen"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}
