//! End-to-end driver checks: golden-file reproduction, config validation,
//! and the published report/CSV shapes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_czkit")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("czkit-golden-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "czkit {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn build_tree_reproduces_golden_from_exported_space() {
    let dir = tmp("tree");
    let first = dir.join("first");
    run_ok(&["build-tree", "--n", "32", "--out", first.to_str().unwrap()]);
    let golden_tree = std::fs::read(first.join("tree.json")).unwrap();

    // reload the exported space through the matrix-file path and rebuild
    let space_path = first.join("space.json");
    let config = serde_json::json!({
        "space": {"kind": "matrix-file", "path": space_path.to_str().unwrap()},
        "delta": 0.5,
        "max_depth": 12,
        "kernel": {"kind": "cauchy-1d"},
        "system": {"generator": {"kind": "constant-one"}, "p": 2.0, "q": 2.0, "seed": 0},
        "seed": 42
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let second = dir.join("second");
    run_ok(&[
        "build-tree",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    let rebuilt = std::fs::read(second.join("tree.json")).unwrap();
    assert_eq!(golden_tree, rebuilt, "tree rebuilt from the exported space differs");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn delta_out_of_range_is_a_config_error() {
    let out = Command::new(bin())
        .args(["build-tree", "--n", "8", "--delta", "1.0", "--out", "/tmp/unused-czkit"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("delta"), "unexpected error text: {err}");
}

#[test]
fn wavelets_subcommand_emits_standard_haar_values() {
    let dir = tmp("wavelets");
    run_ok(&["wavelets", "--n", "32", "--out", dir.to_str().unwrap()]);
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("wavelets.json")).unwrap()).unwrap();
    // some two-child equal-mass cube must carry the +-1/sqrt(2 m) pair
    let mut found = false;
    for entry in dump.as_array().unwrap() {
        let phi = entry["phi"].as_array().unwrap();
        if phi.len() == 1 && phi[0].as_array().unwrap().len() == 2 {
            let a = phi[0][0][0].as_f64().unwrap();
            let b = phi[0][1][0].as_f64().unwrap();
            if (a.abs() - 1.0 / (2.0f64).sqrt()).abs() < 1e-12 && (a + b).abs() < 1e-12 {
                found = true;
                break;
            }
        }
    }
    assert!(found, "no standard two-point pair in the dump");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn compress_sweep_emits_ten_rows_with_monotone_bound() {
    let dir = tmp("sweep");
    run_ok(&["compress-sweep", "--n", "64", "--out", dir.to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.join("compress_sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,kept_fraction,relative_error,relative_error_bound");
    assert_eq!(lines.len(), 11, "header plus ten rows");
    let mut prev_bound = -1.0f64;
    let mut prev_tau = -1.0f64;
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[0] >= prev_tau);
        assert!(cells[3] >= prev_bound - 1e-13, "bound column must be nondecreasing in tau");
        prev_tau = cells[0];
        prev_bound = cells[3];
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn geometry_run_on_gap_space_reports_geodesic_fail_hardy_pass() {
    let dir = tmp("gap");
    let config = serde_json::json!({
        "space": {"kind": "line-with-gap", "segments": [[0.0, 1.0], [2.0, 3.0]], "h": 0.05},
        "delta": 0.5,
        "max_depth": 12,
        "kernel": {"kind": "hardy-size"},
        "system": {"generator": {"kind": "constant-one"}, "p": 2.0, "q": 2.0, "seed": 0},
        "seed": 5
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    run_ok(&[
        "geometry",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let geo = &report["suites"]["geometry"];
    assert_eq!(geo["status"], "pass");
    assert_eq!(geo["detail"]["geodesic_passes"], false);
    assert_eq!(geo["detail"]["chain_consistent"], true);
    let hardy = geo["detail"]["hardy_constants"].as_array().unwrap();
    assert!(!hardy.is_empty() && hardy.iter().all(|v| v.as_f64().unwrap().is_finite()));
    assert_eq!(report["schema_version"], 1);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn full_run_exit_status_reflects_hard_invariants() {
    let dir = tmp("all");
    // a healthy end-to-end run exits zero and reports every suite
    run_ok(&["all", "--n", "32", "--amplitude", "0.9", "--seed", "3", "--out", dir.to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    for suite in ["space", "tree", "operator", "wavelets", "accretive", "stopping", "bcr", "compress", "geometry"] {
        assert_eq!(report["suites"][suite]["status"], "pass", "suite {suite}");
    }
    assert!(report["hard_failures"].as_array().unwrap().is_empty());
    // every reported constant carries a defining tag
    for c in report["constants"].as_array().unwrap() {
        assert!(!c["tag"].as_str().unwrap().is_empty());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_records_equation_tags_for_core_constants() {
    let dir = tmp("tags");
    run_ok(&["all", "--n", "32", "--out", dir.to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let tags: Vec<String> = report["constants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["tag"].as_str().unwrap().to_string())
        .collect();
    for expected in ["3.2", "3.3", "3.7", "3.4", "3.5", "5.2", "5.3", "5.4", "5.5", "2.6", "2.8", "B.1"] {
        assert!(tags.iter().any(|t| t == expected), "missing tag {expected} in {tags:?}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn matrix_file_kernel_round_trip() {
    // export a raw kernel matrix, re-import it via the matrix-file kind,
    // and confirm the assembled operators agree
    let dir = tmp("kernelfile");
    let n = 6usize;
    let mut rows = Vec::new();
    for i in 0..n {
        let cells: Vec<String> = (0..n)
            .map(|j| {
                if i == j {
                    "0".to_string()
                } else {
                    format!("{}", 1.0 / (i as f64 - j as f64))
                }
            })
            .collect();
        rows.push(cells.join(","));
    }
    let kernel_path = dir.join("kernel.csv");
    std::fs::write(&kernel_path, rows.join("\n") + "\n").unwrap();
    let config = serde_json::json!({
        "space": {"kind": "uniform-line", "n": n, "h": 1.0},
        "delta": 0.5,
        "max_depth": 12,
        "kernel": {"kind": "matrix-file", "path": kernel_path.to_str().unwrap()},
        "system": {"generator": {"kind": "constant-one"}, "p": 2.0, "q": 2.0, "seed": 0},
        "seed": 1
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let out_a = dir.join("file-kernel");
    run_ok(&["assemble", "--config", config_path.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    let out_b = dir.join("builtin-kernel");
    run_ok(&["assemble", "--n", "6", "--kernel", "cauchy-1d", "--out", out_b.to_str().unwrap()]);
    let a = std::fs::read_to_string(out_a.join("operator.csv")).unwrap();
    let b = std::fs::read_to_string(out_b.join("operator.csv")).unwrap();
    assert_eq!(a, b, "matrix-file kernel must reproduce the built-in assembly");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn oversized_space_is_rejected() {
    let out = Command::new(bin())
        .args(["build-space", "--n", "5000", "--out", "/tmp/unused-czkit2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("caps"), "unexpected error text: {err}");
}

#[allow(dead_code)]
fn read_csv_column(path: &Path, idx: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}
