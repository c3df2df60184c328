mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures;

fn hyperfeed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperfeed"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(hyperfeed(&["--help"]).status.code(), Some(0));
    assert_eq!(hyperfeed(&[]).status.code(), Some(1));
    assert_eq!(hyperfeed(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hyperfeed(&["batch", "--data-dir", "x"]).status.code(), Some(1));
    assert_eq!(hyperfeed(&["simulate", "--out", "x", "--k", "-1"]).status.code(), Some(1));
}

#[test]
fn batch_writes_the_golden_tables() {
    let out = tempfile::tempdir().unwrap();
    let store = fixtures().join("store");
    let run = hyperfeed(&["batch", "--data-dir", arg(&store), "--out-dir", arg(out.path()), "--workers", "3"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("news_similarity rows: 110"), "{stdout}");
    for name in ["news_similarity.csv", "user_news_base.csv"] {
        let got = std::fs::read(out.path().join(name)).unwrap();
        let want = std::fs::read(fixtures().join("golden").join(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }
    assert!(out.path().join("batch_meta.json").exists());
}

#[test]
fn batch_on_corrupt_store_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("store/news.jsonl"), dir.path().join("news.jsonl")).unwrap();
    std::fs::write(dir.path().join("events.jsonl"), "{not json}\n").unwrap();
    let run = hyperfeed(&["batch", "--data-dir", arg(dir.path()), "--out-dir", arg(dir.path())]);
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8(run.stderr).unwrap();
    assert!(stderr.contains("events.jsonl:1"), "{stderr}");
}

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let run = hyperfeed(&[
        "simulate", "--users", "2", "--items", "40", "--steps", "25", "--k", "5", "--seed", "3", "--out", arg(&csv),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = body.lines().collect();
    assert_eq!(lines[0], "step,precision@k,greedy_accuracy");
    assert_eq!(lines.len(), 26);

    let again = dir.path().join("again.csv");
    hyperfeed(&[
        "simulate", "--users", "2", "--items", "40", "--steps", "25", "--k", "5", "--seed", "3", "--out", arg(&again),
    ]);
    assert_eq!(std::fs::read(&again).unwrap(), body.as_bytes());

    let zero = hyperfeed(&["simulate", "--k", "0", "--out", arg(&csv)]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn replay_reports_hit_rate_windows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("replay.csv");
    let log = fixtures().join("store/events.jsonl");
    let run = hyperfeed(&["replay", "--log", arg(&log), "--k", "5", "--window", "3", "--out", arg(&csv)]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("window,reads,hits,hit_rate\n"));
    for line in body.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (reads, hits): (usize, usize) = (cols[1].parse().unwrap(), cols[2].parse().unwrap());
        assert!(hits <= reads && reads <= 3);
    }

    let missing = hyperfeed(&["replay", "--log", "/nonexistent/events.jsonl", "--out", arg(&csv)]);
    assert_eq!(missing.status.code(), Some(2));
}
