use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dimcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimcert")).args(args).output().expect("binary runs")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn synth_unf_04_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = dimcert(&["synth", "--family", "unf", "--p", "0.4", "--settings", "unf", "--D", "2", "--out", cert.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json_file(&cert);
    assert_eq!(doc["schema_version"], 1);
    let robustness = doc["robustness"].as_f64().unwrap();
    assert!((robustness - 0.070).abs() <= 0.005, "robustness {robustness}");
    assert!(doc["witness_residual"].as_f64().unwrap() <= 1e-6);
    assert!(matches!(doc["status"].as_str(), Some("optimal" | "near_optimal")));
    let entry = &doc["policy"][0];
    assert_eq!(entry.as_array().unwrap().len(), 6);

    let report_path = dir.path().join("verify.json");
    let out = dimcert(&["verify", "--cert", cert.to_str().unwrap(), "--samples", "500", "--out", report_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_file(&report_path);
    assert_eq!(report["passed"], true);
    assert_eq!(report["witness_status"], "feasible");
    assert!((report["p1"].as_f64().unwrap() - doc["p1"].as_f64().unwrap()).abs() <= 1e-9);
    assert!((report["p2_recomputed"].as_f64().unwrap() - doc["p2"].as_f64().unwrap()).abs() <= 1e-9);
}

#[test]
fn synth_iso2_09_is_not_certifiable() {
    let out = dimcert(&["synth", "--family", "iso2", "--p", "0.9", "--settings", "iso2", "--D", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["robustness"].as_f64().unwrap().abs() <= 0.005);
}

#[test]
fn malformed_state_file_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    std::fs::write(&state, r#"{"schema_version": 1, "d_a": 2, "d_b": 2}"#).unwrap();
    let out = dimcert(&["synth", "--state", state.to_str().unwrap(), "--settings", "iso2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "input");
    assert_eq!(err["error"]["field"], "matrix");

    std::fs::write(&state, r#"{"schema_version": 1, "d_a": 1, "d_b": 2, "matrix": [[[1, 0], [0, 0]], [[0, 0]]]}"#).unwrap();
    let out = dimcert(&["synth", "--state", state.to_str().unwrap(), "--settings", "iso2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["field"], "matrix[1]");
}

#[test]
fn explicit_state_matches_named_family() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = dimcert(&["synth", "--family", "iso2", "--p", "0.5", "--settings", "iso2", "--out", cert.to_str().unwrap()]);
    assert!(out.status.success());
    let named = json_file(&cert);
    assert!((named["robustness"].as_f64().unwrap() - 0.146).abs() <= 0.005);

    let mut doc = serde_json::json!({"schema_version": 1, "d_a": 4, "d_b": 4});
    let rho = dimcert_state_iso2_05();
    doc["matrix"] = rho;
    let state = dir.path().join("state.json");
    std::fs::write(&state, doc.to_string()).unwrap();
    let out = dimcert(&["synth", "--state", state.to_str().unwrap(), "--settings", "iso2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let explicit: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((explicit["robustness"].as_f64().unwrap() - named["robustness"].as_f64().unwrap()).abs() <= 1e-9);
}

// ρ_ISO2^{0.5} = 0.5 |ψ₂⁺⟩⟨ψ₂⁺| + 0.5 I/16 with |ψ₂⁺⟩ = (|00⟩ + |11⟩)/√2.
fn dimcert_state_iso2_05() -> Value {
    let mut m = vec![vec![[0.0, 0.0]; 16]; 16];
    for (i, row) in m.iter_mut().enumerate() {
        row[i][0] = 0.5 / 16.0;
    }
    for i in [0, 5] {
        for j in [0, 5] {
            m[i][j][0] += 0.25;
        }
    }
    serde_json::to_value(m).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    assert!(dimcert(&["synth", "--family", "iso2", "--p", "0.5", "--settings", "iso2", "--out", cert.to_str().unwrap()])
        .status
        .success());
    let args = ["simulate", "--cert", cert.to_str().unwrap(), "--rounds", "2000", "--seed", "11"];
    let a = dimcert(&args);
    let b = dimcert(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["rounds"], 2000);
    assert_eq!(doc["certified"], true);

    let product = dimcert(&["simulate", "--cert", cert.to_str().unwrap(), "--rounds", "2000", "--family", "max_entangled", "--dim", "4"]);
    assert!(product.status.success());
}

#[test]
fn pvalue_command() {
    let out = dimcert(&["pvalue", "--v", "2", "--n", "3", "--p1", "0.1"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["p_value"].as_f64().unwrap() - 0.028).abs() < 1e-12);

    let out = dimcert(&["pvalue", "--n", "1", "--p1", "0.833", "--p2", "0"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["expected_pvalue_bound"].as_f64().unwrap() - 0.972111).abs() < 1e-9);

    let out = dimcert(&["pvalue", "--n", "1", "--p1", "0.9", "--p2", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["field"], "p2");
}

#[test]
fn bench_writes_csv() {
    let out = dimcert(&["bench", "--states", "2", "--settings", "unf", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "seed,state_index,robustness,nonzero_count,solve_time_s,status");
    assert_eq!(lines.len(), 3);
}

#[test]
fn bad_solver_env_is_input_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_dimcert"))
        .args(["synth", "--family", "iso2", "--p", "0.5", "--settings", "iso2"])
        .env("DIMCERT_SOLVER_OPTIONS", "{\"max_iter\": \"many\"}")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["field"], "DIMCERT_SOLVER_OPTIONS");
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    assert!(dimcert(&["synth", "--family", "iso2", "--p", "0.5", "--settings", "iso2", "--out", cert.to_str().unwrap()])
        .status
        .success());
    let mut doc = json_file(&cert);
    doc["p1"] = serde_json::json!(doc["p1"].as_f64().unwrap() - 0.05);
    std::fs::write(&cert, doc.to_string()).unwrap();
    let out = dimcert(&["verify", "--cert", cert.to_str().unwrap(), "--samples", "200"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn export_round_trips_through_synth() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let meas = dir.path().join("meas.json");
    assert!(dimcert(&["export", "--family", "iso2", "--p", "0.6", "--out", state.to_str().unwrap()]).status.success());
    assert!(dimcert(&["export", "--settings", "iso2", "--out", meas.to_str().unwrap()]).status.success());
    let out = dimcert(&["synth", "--state", state.to_str().unwrap(), "--measurements", meas.to_str().unwrap(), "--D", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["robustness"].as_f64().unwrap() - 0.108).abs() <= 0.005);
    assert_eq!(doc["settings"]["kind"], "explicit");
}
