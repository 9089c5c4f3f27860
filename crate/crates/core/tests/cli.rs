use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frlc::io::{read_matrix, write_matrix};
use ndarray::{Array2, Axis};
use serde_json::Value;
use tempfile::TempDir;

fn frlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frlc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Squared distances between two interleaved grids on [0, 1].
fn write_cost(dir: &Path, name: &str, n: usize, m: usize) -> PathBuf {
    let c = Array2::from_shape_fn((n, m), |(i, j)| {
        let (x, y) = (i as f64 / n as f64, (j as f64 + 0.5) / m as f64);
        (x - y) * (x - y)
    });
    let path = dir.join(name);
    write_matrix(&path, c.view()).unwrap();
    path
}

#[test]
fn solve_writes_factors_and_report() {
    let tmp = TempDir::new().unwrap();
    let cost = write_cost(tmp.path(), "C.csv", 12, 9);
    let out = tmp.path().join("run");
    let o = frlc(&["solve", "--cost", s(&cost), "--rank", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["Q.csv", "R.csv", "T.csv", "report.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let (q, r, t) = (read_matrix(out.join("Q.csv")).unwrap(), read_matrix(out.join("R.csv")).unwrap(), read_matrix(out.join("T.csv")).unwrap());
    assert_eq!((q.dim(), r.dim(), t.dim()), ((12, 3), (9, 3), (3, 3)));
    let rows = q.sum_axis(Axis(1));
    assert!(rows.iter().all(|x| (x - 1.0 / 12.0).abs() < 1e-8));
    let rep = report(&out);
    assert_eq!(rep["command"], "solve");
    assert_eq!(rep["problem"]["n"], 12);
    assert_eq!(rep["problem"]["r1"], 3);
    assert!(rep["result"]["cost"].as_f64().unwrap().is_finite());
    assert_eq!(rep["config"]["rank"], 3);
}

#[test]
fn solve_without_cost_is_a_usage_error() {
    let o = frlc(&["solve", "--rank", "3"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--cost"), "{}", stderr(&o));
}

#[test]
fn sr_right_relaxes_only_the_right_marginal() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sr");
    let o = frlc(&[
        "solve", "--dataset", "random-2d", "--n", "60", "--m", "60", "--rank", "6", "--mode", "sr-right", "--tau", "50", "--out",
        s(&out),
    ]);
    assert!(code(&o) == 0 || code(&o) == 2, "{}", stderr(&o));
    let rep = report(&out);
    let left = rep["result"]["left-residual"].as_f64().unwrap();
    let right = rep["result"]["right-residual"].as_f64().unwrap();
    assert!(left < 1e-8, "left {left}");
    assert!(right > 100.0 * left, "left {left} right {right}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let cost = write_cost(tmp.path(), "C.csv", 10, 10);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, format!(r#"{{"cost": "{}", "rank": 2, "seed": 7}}"#, s(&cost))).unwrap();
    let out = tmp.path().join("run");
    let o = frlc(&["solve", "--config", s(&cfg), "--rank", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = report(&out);
    assert_eq!(rep["problem"]["r1"], 4);
    assert_eq!(rep["problem"]["seed"], 7);
}

#[test]
fn config_rejects_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"rnak": 2}"#).unwrap();
    let o = frlc(&["solve", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("rnak"), "{}", stderr(&o));
}

#[test]
fn bench_prints_one_row_per_cell() {
    let o = frlc(&["bench", "--dataset", "random-2d", "--n", "20", "--m", "20", "--ranks", "3", "--seeds", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("rank,seed,init,cost"));
    assert!(lines[1].starts_with("3,0,random,"));
}

#[test]
fn bench_rejects_unknown_preset() {
    let o = frlc(&["bench", "--dataset", "nope"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope"));
}

fn two_cliques(dir: &Path) -> PathBuf {
    let mut text = String::from("# two disconnected 5-cliques\n");
    for base in [0, 5] {
        for i in 0..5 {
            for j in i + 1..5 {
                text.push_str(&format!("{} {}\n", base + i, base + j));
            }
        }
    }
    let path = dir.join("edges.txt");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn partition_separates_two_cliques() {
    let tmp = TempDir::new().unwrap();
    let edges = two_cliques(tmp.path());
    let truth = tmp.path().join("truth.csv");
    fs::write(&truth, "0\n0\n0\n0\n0\n1\n1\n1\n1\n1\n").unwrap();
    let out = tmp.path().join("part");
    let o = frlc(&["partition", "--edges", s(&edges), "--clusters", "2", "--runs", "10", "--truth", s(&truth), "--out", s(&out)]);
    assert!(code(&o) == 0 || code(&o) == 2, "{}", stderr(&o));
    let rep = report(&out);
    assert_eq!(rep["problem"]["nodes"], 10);
    assert!(rep["result"]["best-ami"].as_f64().unwrap() > 0.99, "{rep}");
    let labels = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 11);
    assert_eq!(rep["result"]["runs"].as_array().unwrap().len(), 10);
}

#[test]
fn partition_with_one_cluster_labels_everything_zero() {
    let tmp = TempDir::new().unwrap();
    let edges = two_cliques(tmp.path());
    let out = tmp.path().join("part");
    let o = frlc(&["partition", "--edges", s(&edges), "--clusters", "1", "--out", s(&out)]);
    assert!(code(&o) == 0 || code(&o) == 2, "{}", stderr(&o));
    let labels = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert!(labels.lines().skip(1).all(|l| l == "0"));
}

#[test]
fn project_with_identity_factors_returns_the_points() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let eye = Array2::<f64>::eye(3) / 3.0;
    for f in ["Q.csv", "R.csv", "T.csv"] {
        write_matrix(d.join(f), eye.view()).unwrap();
    }
    fs::write(d.join("z1.csv"), "1,2\n3,4\n5,6\n").unwrap();
    fs::write(d.join("z2.csv"), "-1\n0\n1\n").unwrap();
    let out = d.join("proj");
    let o = frlc(&["project", "--factors", s(d), "--points1", s(&d.join("z1.csv")), "--points2", s(&d.join("z2.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let y1 = read_matrix(out.join("Y1.csv")).unwrap();
    let y2 = read_matrix(out.join("Y2.csv")).unwrap();
    let t = read_matrix(out.join("T_normalized.csv")).unwrap();
    assert!((y1 - ndarray::array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).iter().all(|x| x.abs() < 1e-12));
    assert!((y2 - ndarray::array![[-1.0], [0.0], [1.0]]).iter().all(|x| x.abs() < 1e-12));
    assert!((t - Array2::<f64>::eye(3)).iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn project_rejects_empty_points() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let eye = Array2::<f64>::eye(2) / 2.0;
    for f in ["Q.csv", "R.csv", "T.csv"] {
        write_matrix(d.join(f), eye.view()).unwrap();
    }
    fs::write(d.join("z1.csv"), "").unwrap();
    fs::write(d.join("z2.csv"), "0\n1\n").unwrap();
    let o = frlc(&["project", "--factors", s(d), "--points1", s(&d.join("z1.csv")), "--points2", s(&d.join("z2.csv")), "--out", s(&d.join("p"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn binary_matrix_input_matches_csv() {
    let tmp = TempDir::new().unwrap();
    let csv = write_cost(tmp.path(), "C.csv", 8, 7);
    let c = read_matrix(&csv).unwrap();
    let mat = tmp.path().join("C.mat");
    write_matrix(&mat, c.view()).unwrap();
    let run = |cost: &Path, dir: &str| {
        let out = tmp.path().join(dir);
        let o = frlc(&["solve", "--cost", s(cost), "--rank", "2", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        report(&out)["result"]["cost"].as_f64().unwrap()
    };
    assert_eq!(run(&csv, "a"), run(&mat, "b"));
}

#[test]
fn solve_is_deterministic_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let mut outs = Vec::new();
    for dir in ["a", "b"] {
        let out = tmp.path().join(dir);
        let o = frlc(&["solve", "--dataset", "random-2d", "--n", "25", "--m", "30", "--rank", "4", "--seed", "3", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push(out);
    }
    for f in ["Q.csv", "R.csv", "T.csv"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f} differs");
    }
}
