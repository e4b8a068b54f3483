use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sing_core::io::read_matrix;

fn sing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sing")).args(args).env_remove("SING_JOBS").output().expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn simulate(dir: &Path, snr: &str, seed: &str) {
    let out = sing(&["simulate", "--snr-x", snr, "--snr-y", snr, "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_truth_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    simulate(&dir, "5", "4");
    let x = read_matrix(&dir.join("X.csv")).unwrap();
    let y = read_matrix(&dir.join("Y.csv")).unwrap();
    assert_eq!(x.shape(), (48, 1089));
    assert_eq!(y.shape(), (48, 4950));
    let m = manifest(&dir);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seeds"][0], 4);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["r_j"], 2);

    // same seed, same bytes
    let again = tmp.path().join("again");
    simulate(&again, "5", "4");
    assert_eq!(std::fs::read(dir.join("X.csv")).unwrap(), std::fs::read(again.join("X.csv")).unwrap());
}

#[test]
fn lngca_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "5", "2");
    let fit = tmp.path().join("fit");
    let out = sing(&[
        "lngca", "--input", sim.join("Y.csv").to_str().unwrap(), "-r", "4", "--restarts", "4", "--seed", "1", "--out",
        fit.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["U.csv", "M.csv", "S.csv", "jb_values.csv"] {
        assert!(fit.join(f).exists(), "{f}");
    }
    let m = manifest(&fit);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["summary"]["components"], 4);

    let out = sing(&["evaluate", "--estimate", fit.join("S.csv").to_str().unwrap()]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["scaled_gram_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn sing_with_fixed_rank_writes_the_decomposition() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "5", "6");
    let run = tmp.path().join("run");
    let out = sing(&[
        "sing", "--x", sim.join("X.csv").to_str().unwrap(), "--y", sim.join("Y.csv").to_str().unwrap(), "--rx", "3", "--ry",
        "4", "--rj", "2", "--restarts", "4", "--out", run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["M_J.csv", "M_Jy.csv", "D_x.csv", "D_y.csv", "S_Jx.csv", "S_Jy.csv", "M_Ix.csv", "M_Iy.csv", "matching.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let m = manifest(&run);
    assert_eq!(m["summary"]["r_j"], 2);
    assert!(m["summary"]["rho"].as_f64().unwrap() > 0.0);

    let out = sing(&[
        "evaluate", "--kind", "mixing", "--estimate", run.join("M_J.csv").to_str().unwrap(), "--truth",
        sim.join("M_J.csv").to_str().unwrap(),
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["root_pmse"].as_f64().unwrap() < 0.3, "{report}");
}

#[test]
fn tested_rank_zero_writes_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "5", "8");
    // Y with its subjects reversed shares no score direction with X
    let y = read_matrix(&sim.join("Y.csv")).unwrap();
    let n = y.nrows();
    let shuffled = y.select_rows(&(0..n).map(|i| (i * 7 + 3) % n).collect::<Vec<_>>());
    let yp = tmp.path().join("Yp.csv");
    sing_core::io::write_csv(&yp, &shuffled).unwrap();
    let run = tmp.path().join("run");
    let out = sing(&[
        "sing", "--x", sim.join("X.csv").to_str().unwrap(), "--y", yp.to_str().unwrap(), "--rx", "3", "--ry", "4", "--rj",
        "test", "--restarts", "3", "--permutations", "100", "--out", run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no joint structure"));
    assert!(run.join("NO_JOINT_STRUCTURE").exists());
    assert_eq!(manifest(&run)["summary"]["r_j"], 0);
}

#[test]
fn config_file_supplies_options_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "5", "1");
    let fit = tmp.path().join("fit");
    let cfg = tmp.path().join("cfg.json");
    let body = serde_json::json!({
        "input": sim.join("X.csv"),
        "components": 3,
        "restarts": 2,
        "seed": 99,
        "out": fit,
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let out = sing(&["--config", cfg.to_str().unwrap(), "lngca", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&fit);
    assert_eq!(m["seeds"][0], 5);
    assert_eq!(m["config"]["restarts"], 2);

    // the manifest itself replays the run
    let replay = tmp.path().join("replay");
    let out = sing(&["--config", fit.join("manifest.json").to_str().unwrap(), "lngca", "--out", replay.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(fit.join("S.csv")).unwrap(), std::fs::read(replay.join("S.csv")).unwrap());
}

#[test]
fn exit_codes_separate_input_and_configuration_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let o = out_dir.to_str().unwrap();

    assert_eq!(sing(&["lngca", "--input", "/no/such/file.csv", "-r", "2", "--out", o]).status.code(), Some(2));

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3\n4,five,6\n").unwrap();
    assert_eq!(sing(&["lngca", "--input", bad.to_str().unwrap(), "-r", "1", "--out", o]).status.code(), Some(2));

    let ragged = tmp.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    assert_eq!(sing(&["lngca", "--input", ragged.to_str().unwrap(), "-r", "1", "--out", o]).status.code(), Some(2));

    assert_eq!(sing(&["lngca", "--input", bad.to_str().unwrap(), "--out", o]).status.code(), Some(3));
    assert_eq!(sing(&["simulate", "--snr-x", "-1", "--out", o]).status.code(), Some(3));
    assert_eq!(sing(&["benchmark", "--methods", "pca", "--out", o]).status.code(), Some(3));
    assert_eq!(sing(&["sing", "--x", "a.csv", "--y", "b.csv", "--rj", "two", "--out", o]).status.code(), Some(3));
    assert_eq!(sing(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(sing(&["--help"]).status.code(), Some(0));
}

#[test]
fn benchmark_writes_long_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bench");
    let out = sing(&[
        "benchmark", "--methods", "sing-rho0,sing-large,jointica", "--reps", "1", "--regimes", "high/high", "--restarts", "2",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["method", "regime", "snr_x", "snr_y", "rep", "seed", "metric", "value"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 6);
    for r in &rows {
        let v: f64 = r[7].parse().unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
    assert!(dir.join("summary.csv").exists());
}
