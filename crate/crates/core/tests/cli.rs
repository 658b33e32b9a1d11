//! End-to-end runs of the `dimorph` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dimorph::cli::output::{emit_distribution_csv, load_distribution_csv, sha256_hex, Manifest, Snapshot};
use dimorph::macro_solver::{integrate, MacroModel, MacroState, SolverConfig};
use dimorph::rates::ConstantRates;
use dimorph::kernels::{InheritanceKernel, NoiseDensity};
use dimorph::{GridMeasure, TraitGrid};
use serde_json::{json, Value};

const RATES: &str = r#"{"p_f": 2.0, "p_m": 2.0, "D_f": 1.0, "D_m": 1.0, "U_ff": 0.5, "U_fm": 0.5, "U_mf": 0.5, "U_mm": 0.5}"#;

fn rates() -> Value {
    serde_json::from_str(RATES).unwrap()
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}

fn dimorph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimorph"))
        .args(args)
        .env_remove("DIMORPH_OUT")
        .output()
        .unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dimorph(&args)
}

fn macro_config(n_cells: usize, t_end: f64) -> Value {
    json!({
        "schema_version": 1,
        "grid": {"x_min": 0.0, "x_max": 4.0, "n_cells": n_cells},
        "rates": rates(),
        "kernel": {"family": "additive", "noise": {"kind": "gaussian", "sigma": 0.5}},
        "initial": {
            "male": {"shape": "uniform", "lo": 0.0, "hi": 2.0, "mass": 0.8},
            "female": {"shape": "gaussian", "mean": 2.5, "sd": 0.6, "mass": 1.2}
        },
        "solver": {"dt": 0.01, "t_end": t_end, "scheme": "rk4", "positivity": "clip"},
        "macro": {"mode": "full"}
    })
}

fn ibm_config(seed: u64) -> Value {
    json!({
        "schema_version": 1,
        "grid": {"x_min": -5.0, "x_max": 5.0, "n_cells": 50},
        "rates": rates(),
        "kernel": {"family": "additive", "noise": {"kind": "gaussian", "sigma": 0.5}},
        "initial": {
            "male": {"shape": "gaussian", "mean": -0.5, "sd": 0.7},
            "female": {"shape": "gaussian", "mean": 0.5, "sd": 0.7}
        },
        "ibm": {"scale": 200, "t_end": 2.0, "sample_times": [0.0, 1.0, 2.0]},
        "seed": seed
    })
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn invalid_rate_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = json!({"schema_version": 1, "rates": rates(), "totals": {"M0": 1.0, "F0": 1.0}});
    config["rates"]["D_f"] = json!(-1.0);
    let path = write_config(dir.path(), "bad.json", &config);
    let output = run("totals", &path, &dir.path().join("out"), &[]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("D_f"));
}

#[test]
fn unknown_fields_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = json!({"schema_version": 1, "rates": rates()});
    config["rates"]["p_x"] = json!(1.0);
    let path = write_config(dir.path(), "typo.json", &config);
    assert_eq!(run("totals", &path, &dir.path().join("out"), &[]).status.code(), Some(2));
    let missing = dir.path().join("absent.json");
    assert_eq!(run("totals", &missing, &dir.path().join("out"), &[]).status.code(), Some(2));
}

#[test]
fn single_snapshot_csv_has_two_rows_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TraitGrid::new(0.0, 1.0, 4).unwrap();
    let m = GridMeasure::from_weights(grid, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let f = GridMeasure::from_weights(grid, vec![1.0 / 3.0, 0.0, 2e-17, 0.7]).unwrap();
    let path = dir.path().join("one.csv");
    emit_distribution_csv(&[Snapshot::pair(0.5, ("male", &m), ("female", &f))], &path).unwrap();
    let rows = load_distribution_csv(&path).unwrap();
    assert_eq!(rows.len(), 8);
    for (row, w) in rows.iter().zip(m.weights().iter().chain(f.weights())) {
        assert_eq!(row.time, 0.5);
        assert!((row.weight - w).abs() < 1e-12);
    }
    let empty = dir.path().join("empty.csv");
    emit_distribution_csv(&[], &empty).unwrap();
    assert_eq!(std::fs::read_to_string(&empty).unwrap(), "time,component,cell_center,weight\n");
}

#[test]
fn trajectory_csv_round_trips_the_solver_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "macro.json", &macro_config(40, 1.0));
    let out = dir.path().join("out");
    assert!(run("macro", &path, &out, &[]).status.success());
    let rows = load_distribution_csv(&out.join("trajectory.csv")).unwrap();

    let grid = TraitGrid::new(0.0, 4.0, 40).unwrap();
    let kernel = InheritanceKernel::additive(NoiseDensity::gaussian(0.5).unwrap());
    let model = MacroModel::new(ConstantRates::symmetric(2.0, 1.0, 0.5).into(), &kernel, grid).unwrap();
    let state0 = MacroState {
        t: 0.0,
        m: GridMeasure::uniform(grid, 0.0, 2.0, 0.8).unwrap(),
        f: GridMeasure::gaussian(grid, 2.5, 0.6, 1.2).unwrap(),
    };
    let end = integrate(&state0, &model, &SolverConfig::new(0.01, 1.0)).unwrap().last().clone();
    let last: Vec<_> = rows.iter().filter(|r| (r.time - 1.0).abs() < 1e-12).collect();
    assert_eq!(last.len(), 80);
    for row in last {
        let measure = if row.component == "male" { &end.m } else { &end.f };
        let i = grid.cell_of(row.cell_center);
        assert!((grid.center(i) - row.cell_center).abs() < 1e-12);
        assert!((measure.weights()[i] - row.weight).abs() < 1e-12);
    }
}

#[test]
fn manifest_hashes_match_the_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "ibm.json", &ibm_config(5));
    let out = dir.path().join("out");
    assert!(run("ibm", &path, &out, &[]).status.success());
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.scenario, "ibm");
    assert_eq!(manifest.seed, 5);
    assert!(!manifest.files.is_empty());
    for entry in &manifest.files {
        let bytes = std::fs::read(out.join(&entry.path)).unwrap();
        assert_eq!(entry.sha256, sha256_hex(&bytes), "{}", entry.path);
        assert_eq!(entry.bytes, bytes.len() as u64);
    }
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "ibm.json", &ibm_config(9));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("ibm", &path, &a, &[]).status.success());
    assert!(run("ibm", &path, &b, &["--jobs", "3"]).status.success());
    assert_eq!(files(&a), files(&b));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let nine = write_config(dir.path(), "nine.json", &ibm_config(9));
    let ten = write_config(dir.path(), "ten.json", &ibm_config(10));
    assert!(run("ibm", &nine, &a, &["--seed", "10"]).status.success());
    assert!(run("ibm", &ten, &b, &[]).status.success());
    assert!(run("ibm", &nine, &c, &[]).status.success());
    assert_eq!(std::fs::read(a.join("ibm.csv")).unwrap(), std::fs::read(b.join("ibm.csv")).unwrap());
    assert_ne!(std::fs::read(a.join("ibm.csv")).unwrap(), std::fs::read(c.join("ibm.csv")).unwrap());
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "totals.json", &json!({"schema_version": 1, "rates": rates(), "totals": {"M0": 1.0, "F0": 0.5, "t_end": 5.0}}));
    let env_out = dir.path().join("from-env");
    let output = Command::new(env!("CARGO_BIN_EXE_dimorph"))
        .args(["totals", "--config", path.to_str().unwrap()])
        .env("DIMORPH_OUT", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(env_out.join("totals.csv").exists());
    assert!(env_out.join("manifest.json").exists());
}

#[test]
fn totals_summary_reports_the_stationary_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "totals.json", &json!({"schema_version": 1, "rates": rates(), "totals": {"M0": 0.3, "F0": 0.3, "t_end": 5.0}}));
    let out = dir.path().join("out");
    assert!(run("totals", &path, &out, &[]).status.success());
    let summary: Value = serde_json::from_slice(&std::fs::read(out.join("totals.json")).unwrap()).unwrap();
    // p - D = 1 and 2 U = 1.
    assert!((summary["M_bar"].as_f64().unwrap() - 1.0).abs() < 1e-10, "{summary}");
    assert!((summary["F_bar"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(summary["classification"], "Persistence");
}

#[test]
fn bad_subcommand_is_a_usage_error() {
    assert_eq!(dimorph(&["nonsense"]).status.code(), Some(2));
}
