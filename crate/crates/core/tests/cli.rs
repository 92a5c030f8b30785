use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rbm-lab"))
}

fn run(args: &[&str]) -> i32 {
    bin().args(args).env_remove("RBM_LAB_THREADS").output().unwrap().status.code().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn quad_reports_both_integrals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("q");
    assert_eq!(run(&["quad", "--out", out.to_str().unwrap()]), 0);
    let s = summary(&out);
    let r = &s["results"];
    let i1 = r["I1"]["value"].as_f64().unwrap();
    let i2 = r["I2"]["value"].as_f64().unwrap();
    assert!((i1 - (-0.4671600)).abs() < 1e-6);
    assert!((i2 - (-0.3068528)).abs() < 1e-6);
    assert!(r["I1"]["error_estimate"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["lambda_limit"]["exact"], Value::Bool(true));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"], "quad");
    assert!(manifest["version"].is_string());
}

#[test]
fn summary_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let common = ["lambda", "--rho", "inf", "--N", "3000", "--seed", "11"];
    let mut args: Vec<&str> = common.to_vec();
    args.extend(["--out", a.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(run(&args), 0);
    let mut args: Vec<&str> = common.to_vec();
    args.extend(["--out", b.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(run(&args), 0);
    let sa = fs::read(a.join("summary.json")).unwrap();
    let sb = fs::read(b.join("summary.json")).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(fs::read(a.join("lambda.csv")).unwrap(), fs::read(b.join("lambda.csv")).unwrap());
    let s = summary(&a);
    assert!(s["results"]["lambda"]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn threads_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let st = bin()
        .args(["validate-harmonic", "--N", "500", "--out", out.to_str().unwrap()])
        .env("RBM_LAB_THREADS", "2")
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["threads"], 2);
    assert!(out.join("hits.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("x");
    let o = o.to_str().unwrap();
    assert_eq!(run(&["teleport", "--out", o]), 4);
    assert_eq!(run(&["lambda", "--N", "0", "--out", o]), 2);
    assert_eq!(run(&["lambda", "--rho", "0.5", "--out", o]), 2);
    assert_eq!(run(&["--no-such-flag"]), 2);
    assert_eq!(run(&["quad", "--config", tmp.path().join("missing.json").to_str().unwrap()]), 5);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"experiment": "quad", "surprise": true}"#).unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "--out", o]), 2);

    let tight = tmp.path().join("tight.json");
    fs::write(&tight, r#"{"experiment": "lambda", "rho": "inf", "N": 50, "max_steps": 10}"#).unwrap();
    assert_eq!(run(&["--config", tight.to_str().unwrap(), "--out", o]), 3);

    // a file where the output directory should go
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    assert_eq!(run(&["quad", "--out", blocker.join("sub").to_str().unwrap()]), 5);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("flow.json");
    fs::write(
        &cfg,
        r#"{"experiment": "flow", "rho": 3, "flow": {"n_per_axis": 4, "n_bins": 3, "snapshot_times": [0, 0.5, 1], "pair_t": 10}}"#,
    )
    .unwrap();
    let out = tmp.path().join("f");
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]), 0);
    let s = summary(&out);
    assert_eq!(s["seed"], 4);
    let particles = s["results"]["particles"]["value"].as_u64().unwrap();
    assert!(particles > 0 && particles <= 64);
    for f in ["uniformity.csv", "pair_histogram.csv", "earthworm_final.csv", "snapshots/snapshot_002.csv", "measures/measure_000.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let header = fs::read_to_string(out.join("snapshots/snapshot_000.csv")).unwrap();
    assert!(header.starts_with("particle_id,x,y,z,local_time"));
}

#[test]
fn couple_writes_ladders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"experiment": "couple", "N": 2, "b": 0.5, "couple": {"k": 2}}"#).unwrap();
    let out = tmp.path().join("c");
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let ladder = fs::read_to_string(out.join("ladders/replica_00001.csv")).unwrap();
    assert!(ladder.starts_with("k,t,V_k,L^X,L^Y"));
    assert_eq!(ladder.lines().count(), 4);
    assert!(summary(&out)["results"]["drift_V1_minus_V0"]["stderr"].is_number());
}
