use std::fs;
use std::process::Command;

fn nsmooth() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nsmooth"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn bounds_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let status = nsmooth().args(["bounds", "--dims", "4,16", "--out"]).arg(dir.path()).output().unwrap().status;
    assert!(status.success());
    let reports: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("bounds.json")).unwrap()).unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 4);
    assert_eq!(reports[0]["dim"], 4);
    assert!((reports[0]["beta"].as_f64().unwrap() - 0.030708).abs() < 1e-5);
    assert!(reports[0]["L_smooth"].as_f64().unwrap() > 500.0);
}

#[test]
fn trace_reads_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[trace]\ndim = 3\nruns = 2\nsteps = 30\nthin = 10\n").unwrap();
    let status = nsmooth().arg("trace").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap().status;
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,run_id,x1"));
    assert_eq!(lines.count(), 2 * 2 * 4);
}

#[test]
fn failed_certificate_sets_exit_code() {
    // one dimension gives no exponent fit, so the scaling certificate fails
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"chains": 1000, "k_max": 100, "check_every": 50, "reference_samples": 5000, "sensitivity": []}"#)
        .unwrap();
    let out = nsmooth()
        .args(["synthetic", "--dims", "2", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let scaling = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert!(scaling.starts_with("d,seed,iters,censored"));
    assert!(scaling.lines().nth(1).unwrap().starts_with("2,3,"));
    let certs: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("certificates.json")).unwrap()).unwrap();
    assert_eq!(certs[0]["metric"], "scaling_exponent");
    assert_eq!(certs[0]["pass"], false);
}

#[test]
fn invalid_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nsmooth().args(["bounds", "--dims", "0", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "dimz = [2]\n").unwrap();
    let out = nsmooth().arg("bounds").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimz"));
}
