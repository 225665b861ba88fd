use std::fs;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_guidance-lab"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn missing_total_steps_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"num_chains": 4}"#).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`T`"));
}

#[test]
fn bad_override_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"T": 20, "num_chains": 2}"#).unwrap();
    let out = bin().arg("run").arg(&cfg).args(["--set", "num_chains=0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_chains"));
}

#[test]
fn run_writes_artifacts_and_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"T": 50, "num_chains": 4, "mode": "compress", "scale": 1.0,
            "schedule": {"mode": "power_law", "count": 10, "k": 1}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["--json", "--threads", "2", "run"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["summary"]["grad_evals"], 10);
    for name in ["trace.csv", "summary.json", "schedule.json", "run.json"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }

    let svg_path = dir.path().join("loss.svg");
    let out = bin().arg("plot").arg(out_dir.join("trace.csv")).arg("--out").arg(&svg_path).output().unwrap();
    assert!(out.status.success());
    assert!(fs::read_to_string(&svg_path).unwrap().contains("<polyline"));
}

#[test]
fn schedule_json_lists_steps() {
    let out = bin()
        .args(["--json", "schedule", "-T", "10", "--count", "5", "--k", "0.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["steps"], serde_json::json!([10, 6, 4, 3, 2]));
    assert_eq!(v["gap_weights"], serde_json::json!([4, 2, 1, 1, 2]));
}

#[test]
fn sweep_prints_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.json");
    fs::write(
        &spec,
        r#"{"base": {"T": 250, "num_chains": 2, "mode": "compress", "scale": 1.0,
                     "schedule": {"mode": "power_law", "count": 50}},
            "axis": "k", "values": [2, 1, 3]}"#,
    )
    .unwrap();
    let out = bin().arg("sweep").arg(&spec).arg("--out").arg(dir.path().join("sw")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let sizes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(sizes, ["50", "47", "41"]);
    assert!(dir.path().join("sw/sweep.csv").is_file());
}
