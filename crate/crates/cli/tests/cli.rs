use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sbergsma_core::io::parse_panel;
use sbergsma_core::models::{simulate_panel, DependenceModel, DependenceSpec};
use sbergsma_core::{builtin, sb_statistic};

fn sbergsma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbergsma"))
        .args(args)
        .env_remove("SBERGSMA_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = sbergsma(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
fn identical_columns_compute_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,c,d\n");
    for v in [0.3, -1.0, 2.2, 0.7, 1.9, -0.4] {
        csv.push_str(&format!("{v},{v},{v},{v}\n"));
    }
    let panel = write(dir.path(), "panel.csv", &csv);
    let out = json(&ok(&[
        "compute",
        panel.to_str().unwrap(),
        "--linear-chain",
        "4",
        "--standardize",
    ]));
    let value = out["result"]["value"].as_f64().unwrap();
    assert!((value - 1.0).abs() < 1e-12, "{value}");
    assert_eq!(out["result"]["s0"].as_f64().unwrap(), 4.0);
    assert_eq!(out["result"]["pair_rho"].as_array().unwrap().len(), 4);
    assert!(out["provenance"]["input_hashes"]["panel"].is_string());
}

#[test]
fn test_reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    ok(&[
        "simulate",
        "--model",
        "sar",
        "--theta",
        "0.5",
        "--linear-chain",
        "6",
        "--T",
        "30",
        "--seed",
        "5",
        "-o",
        panel.to_str().unwrap(),
    ]);
    let args = |threads: &'static str| {
        vec![
            "test".to_string(),
            panel.to_str().unwrap().to_string(),
            "--linear-chain".into(),
            "6".into(),
            "--reps".into(),
            "300".into(),
            "--bootstrap".into(),
            "200".into(),
            "--screen-sims".into(),
            "300".into(),
            "--seed".into(),
            "11".into(),
            "--threads".into(),
            threads.into(),
        ]
    };
    let run = |threads| {
        let a = args(threads);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let first = run("1");
    assert_eq!(first, run("1"));
    assert_eq!(first, run("3"));
    let report = json(&first);
    assert_eq!(report["provenance"]["seed"].as_u64(), Some(11));
    let p = report["result"]["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn simulate_then_compute_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("sim.csv");
    ok(&[
        "simulate",
        "--model",
        "sar",
        "--theta",
        "0.75",
        "--builtin",
        "kerala-adjacency",
        "--T",
        "50",
        "--seed",
        "42",
        "-o",
        panel_path.to_str().unwrap(),
    ]);
    let cli = json(&ok(&[
        "compute",
        panel_path.to_str().unwrap(),
        "--builtin",
        "kerala-adjacency",
    ]));

    let w = builtin::kerala_adjacency().row_standardize().unwrap();
    let spec = DependenceSpec::gaussian(DependenceModel::Sar, 0.75, w.clone()).unwrap();
    let panel = simulate_panel(&spec, 50, 42).unwrap();
    let on_disk = parse_panel(&std::fs::read(&panel_path).unwrap()).unwrap();
    assert_eq!(on_disk, panel);
    let lib = sb_statistic(&panel, &w).unwrap();
    assert_eq!(cli["result"]["value"].as_f64().unwrap(), lib.value);
}

#[test]
fn errors_are_categorized_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let single = write(dir.path(), "one.csv", "a\n1\n2\n3\n");
    let out = sbergsma(&["compute", single.to_str().unwrap(), "--linear-chain", "2"]);
    assert!(!out.status.success());
    let err = json(&out.stderr);
    assert_eq!(err["error"], "size_error");

    let blank = write(dir.path(), "blank.csv", "a,b\n1,2\n,3\n4,5\n");
    let err = json(&sbergsma(&["compute", blank.to_str().unwrap(), "--linear-chain", "2"]).stderr);
    assert_eq!(err["error"], "parse_error");

    let diag = write(dir.path(), "w.csv", "0,1\n1,0.1\n");
    let panel = write(dir.path(), "p.csv", "a,b\n1,2\n3,1\n2,5\n");
    let err = json(&sbergsma(&["compute", panel.to_str().unwrap(), "--weights", diag.to_str().unwrap()]).stderr);
    assert_eq!(err["error"], "nonzero_diagonal_error");
}

#[test]
fn failed_runs_leave_no_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let panel = write(dir.path(), "p.csv", "a,b\n1,2\n1,2\n1,2\n");
    let target = dir.path().join("out.json");
    let out = sbergsma(&[
        "compute",
        panel.to_str().unwrap(),
        "--linear-chain",
        "2",
        "-o",
        target.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(json(&out.stderr)["error"], "degenerate_region_error");
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec![std::ffi::OsString::from("p.csv")]);
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let out = sbergsma(&[
        "simulate",
        "--model",
        "sma",
        "--theta",
        "0.3",
        "--linear-chain",
        "3",
        "--T",
        "5",
    ]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let seed: u64 = stderr
        .trim()
        .strip_prefix("seed: ")
        .expect("seed line")
        .parse()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains(&format!("# seed: {seed}")));
}

#[test]
fn edge_list_matches_linear_chain() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.csv", "1,2\n2,3\n");
    let from_edges = ok(&["weights", "--edges", edges.to_str().unwrap(), "--no-standardize"]);
    let from_chain = ok(&["weights", "--linear-chain", "3", "--no-standardize"]);
    let strip = |b: Vec<u8>| {
        String::from_utf8(b)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(from_edges), strip(from_chain));
}

#[test]
fn prewhiten_writes_residuals_and_acf() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("p.csv");
    ok(&[
        "simulate",
        "--model",
        "sma",
        "--theta",
        "0.2",
        "--linear-chain",
        "3",
        "--T",
        "40",
        "--seed",
        "1",
        "-o",
        panel.to_str().unwrap(),
    ]);
    let resid = dir.path().join("resid.csv");
    ok(&[
        "prewhiten",
        panel.to_str().unwrap(),
        "--ar",
        "3",
        "-o",
        resid.to_str().unwrap(),
    ]);
    let r = parse_panel(&std::fs::read(&resid).unwrap()).unwrap();
    assert_eq!((r.times(), r.regions()), (37, 3));
    let acf = std::fs::read_to_string(dir.path().join("resid_acf.csv")).unwrap();
    assert!(acf.lines().any(|l| l == "region,lag,acf,threshold"));
    assert!(acf.lines().any(|l| l.starts_with("R1,0,1,")));
}

#[test]
fn null_sweep_and_spectrum_emit_csv() {
    let null = String::from_utf8(ok(&[
        "null",
        "--dist",
        "normal",
        "--R",
        "4",
        "--T",
        "20",
        "--linear-chain",
        "4",
        "--reps",
        "50",
        "--seed",
        "3",
    ]))
    .unwrap();
    let body: Vec<&str> = null.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "t_sb");
    assert_eq!(body.len(), 51);

    let sweep = String::from_utf8(ok(&[
        "sweep",
        "--model",
        "sar",
        "--thetas",
        "0,0.5",
        "--linear-chain",
        "4",
        "--T",
        "20",
        "--reps",
        "20",
        "--seed",
        "3",
    ]))
    .unwrap();
    assert_eq!(sweep.lines().filter(|l| l.starts_with("sar,")).count(), 2);

    let spectrum = String::from_utf8(ok(&["spectrum", "--dist", "uniform", "--K", "60", "--grid", "300"])).unwrap();
    let first = spectrum.lines().find(|l| l.starts_with("1,")).unwrap();
    let lambda1: f64 = first[2..].parse().unwrap();
    assert!((lambda1 - 1.0 / std::f64::consts::PI.powi(2)).abs() < 1e-3);
}
