use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cesdetect"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const H0: &str = r#"{
  "schema_version": 1,
  "n": 4,
  "m1": 1,
  "m0": 16,
  "model": {"kind": "complex_t", "dof": 5.0},
  "sigma": {"kind": "exp_correlation", "rho": 0.6},
  "steering": {"kind": "fourier", "freq": 0.15},
  "detectors": ["mglrt", "kelly", "wald", "amf"],
  "trials": 3000,
  "seed": 11,
  "thresholds": [2.0],
  "nominal_pfa": [0.05, 0.01]
}"#;

fn simulate(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_writes_results_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "h0.json", H0);
    let out = tmp.path().join("run");
    let o = simulate(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("result.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3, "{csv}");
    assert_eq!(csv.lines().next().unwrap(), "detector,model,N,M1,M0,trials,threshold,pfa_hat,ci_lo,ci_hi,ks,seed");

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["schema_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["timestamp"].as_str().unwrap().ends_with('Z'));

    let result: serde_json::Value = serde_json::from_slice(&fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["partial"], false);
    assert_eq!(result["config"]["trials"], 3000);
    // 0.05 · 3000 ≥ 100 calibrates; 0.01 · 3000 < 100 does not
    let cal = fs::read_to_string(out.join("calibration.csv")).unwrap();
    assert_eq!(cal.lines().count(), 1 + 4);
}

#[test]
fn rerun_is_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "h0.json", H0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(simulate(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(simulate(&cfg, &b, &["--workers", "4"]).status.success());
    for f in ["result.csv", "result.json", "calibration.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "h0.json", H0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(simulate(&cfg, &a, &["--seed", "12", "--format", "csv"]).status.success());
    assert!(simulate(&cfg, &b, &["--format", "csv"]).status.success());
    assert!(!a.join("result.json").exists());
    let ca = fs::read_to_string(a.join("result.csv")).unwrap();
    assert!(ca.lines().nth(1).unwrap().ends_with(",12"));
    assert_ne!(ca, fs::read_to_string(b.join("result.csv")).unwrap());
}

#[test]
fn invalid_geometry_exits_2_naming_the_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &H0.replace("\"m0\": 16", "\"m0\": 3"));
    let o = simulate(&cfg, &tmp.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:5:") && err.contains("m0 >= n"), "{err}");
}

#[test]
fn unknown_key_exits_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "typo.json", &H0.replace("\"trials\"", "\"trails\""));
    let o = simulate(&cfg, &tmp.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("typo.json:10:") && err.contains("trails"), "{err}");
}

#[test]
fn roc_emits_sorted_curves_per_detector() {
    let tmp = tempfile::tempdir().unwrap();
    let body = H0.replace("\"trials\": 3000", "\"trials\": 1500").replace(
        "\"nominal_pfa\": [0.05, 0.01]",
        "\"nominal_pfa\": [0.01],\n  \"snr_db\": [15.0, 0.0, 5.0, 10.0]",
    );
    let cfg = write_config(tmp.path(), "roc.json", &body);
    let out = tmp.path().join("roc");
    let o = run(&["roc", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for det in ["mglrt", "kelly", "wald", "amf"] {
        let text = fs::read_to_string(out.join(format!("roc_{det}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "snr_db,threshold,pd,ci_lo,ci_hi");
        let rows: Vec<Vec<f64>> =
            lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 2 * 5);
        assert_eq!(rows[0][0], f64::NEG_INFINITY);
        assert!(rows.windows(2).all(|w| w[0][0] <= w[1][0]));
    }

    // the α = 0 row of the sweep reproduces the null run
    let sim = tmp.path().join("sim");
    let null_cfg = write_config(tmp.path(), "null.json", &body);
    assert!(simulate(&null_cfg, &sim, &["--format", "csv"]).status.success());
    let sim_csv = fs::read_to_string(sim.join("result.csv")).unwrap();
    let roc_kelly = fs::read_to_string(out.join("roc_kelly.csv")).unwrap();
    let null_row: Vec<&str> = roc_kelly.lines().nth(1).unwrap().split(',').collect();
    let sim_row = sim_csv.lines().find(|l| l.starts_with("kelly,") && l.contains(null_row[1])).unwrap();
    assert_eq!(sim_row.split(',').nth(7).unwrap(), null_row[2]);
}

#[test]
fn asymptotics_reports_unit_weights_for_gaussian() {
    let tmp = tempfile::tempdir().unwrap();
    let body = H0.replace("\"kind\": \"complex_t\", \"dof\": 5.0", "\"kind\": \"gaussian\"").replace(
        "\"seed\": 11,",
        "\"seed\": 11,\n  \"sample_size\": 100000,",
    );
    let cfg = write_config(tmp.path(), "asy.json", &body);
    let out = tmp.path().join("asy");
    let o = run(&["asymptotics", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(out.join("sandwich.json")).unwrap()).unwrap();
    for k in 0..2 {
        let l = rep["lambdas"][k].as_f64().unwrap();
        let se = rep["lambdas_se"][k].as_f64().unwrap();
        assert!((l - 1.0).abs() < 0.05 && se > 0.0, "lambda {l} se {se}");
    }
    assert_eq!(rep["sample_size"], 100000);
}

#[test]
fn selftest_passes_quickly_and_detects_perturbation() {
    let t = Instant::now();
    let o = run(&["selftest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(t.elapsed().as_secs_f64() < 5.0);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    let o = run(&["selftest", "--perturb", "1e-3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mglrt == kelly"));
}
