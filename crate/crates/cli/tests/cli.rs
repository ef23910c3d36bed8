use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailchain"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    serde_json::from_str(lines[0]).unwrap()
}

#[test]
fn validate_rejects_explosive_ar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ar_explosive.json");
    let out = run(&["validate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_line(&out);
    assert!(err["message"].as_str().unwrap().contains("spectral_radius"));
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn validate_accepts_tarch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("tarch_validate.json");
    let out = run(&["validate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["accepted"], true);
    let alpha = report["info"]["tail_index"].as_f64().unwrap();
    assert!((alpha - 4.730299329952947).abs() < 1e-6);
}

#[test]
fn simulate_is_byte_identical() {
    let cfg = configs().join("renewal_simulate.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    for f in ["path.csv", "path.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let csv = fs::read_to_string(a.path().join("path.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("path.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
}

#[test]
fn seed_flag_changes_the_path() {
    let cfg = configs().join("renewal_simulate.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.path().to_str().unwrap()]);
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap(), "--seed", "8"]);
    assert_ne!(fs::read(a.path().join("path.csv")).unwrap(), fs::read(b.path().join("path.csv")).unwrap());
}

#[test]
fn mc_hill_config_meets_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mc_hill_iid.json");
    let out = run(&["mc", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--workers", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let v = report["components"][0]["variance"].as_f64().unwrap();
    assert!((0.20..=0.30).contains(&v), "{v}");
    assert_eq!(report["records"].as_array().unwrap().len(), 400);
    assert!(report.get("wall_clock_secs").is_none());
}

#[test]
fn mc_reports_identical_across_workers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("mc_hill_iid.json");
    for (d, w) in [(&a, "1"), (&b, "6")] {
        let out = run(&[
            "mc",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--workers",
            w,
            "--override",
            "replications=30",
            "--override",
            "n=5000",
            "--override",
            "statistic.k=100",
        ]);
        assert!(out.status.code().is_some());
    }
    for f in ["report.json", "records.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["statistic"]["k"], 100);
}

#[test]
fn mc_missed_target_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mc_hill_iid.json");
    let out = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "replications=20",
        "--override",
        "target.range=[10.0, 20.0]",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "tolerance");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = run(&["mc", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "json");

    let out = run(&["mc", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = configs().join("mc_hill_iid.json");
    let out = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "statistic.name=\"nope\"",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "unknown_name");
}

#[test]
fn estimation_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("estimate_ar1.json");
    let out = run(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "n=500",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "k_out_of_range");
}

#[test]
fn estimate_extremogram_variance_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for (cmd, cfg, files) in [
        ("estimate", "estimate_ar1.json", &["estimates.csv", "estimates.json"][..]),
        ("extremogram", "extremogram_ar1.json", &["extremogram.csv", "extremogram.json"][..]),
        ("variance", "variance_ar1.json", &["variance.json", "spectral.csv"][..]),
    ] {
        let path = configs().join(cfg);
        let out = run(&[cmd, "--config", path.to_str().unwrap(), "--out", d, "--override", "n=20000", "--override", "k=200"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files {
            assert!(dir.path().join(f).exists(), "{cmd}: {f}");
        }
    }
    let csv = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
    assert!(csv.starts_with("name,n,k,h,value,auxiliary"));
    assert_eq!(csv.lines().count(), 8);
    let ext = fs::read_to_string(dir.path().join("extremogram.csv")).unwrap();
    assert!(ext.starts_with("lag,value\n0,1\n"));
}

#[test]
fn estimate_reads_path_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let values: Vec<String> = (1..=100).map(|i| format!("{i},{}", i as f64)).collect();
    fs::write(d.join("p.csv"), format!("index,value\n{}\n", values.join("\n"))).unwrap();
    fs::write(d.join("e.json"), r#"{"path": "p.csv", "estimators": [{"name": "cte_hat", "k": 1}]}"#).unwrap();
    let out = run(&["estimate", "--config", d.join("e.json").to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs: serde_json::Value = serde_json::from_slice(&fs::read(d.join("estimates.json")).unwrap()).unwrap();
    // threshold 99, single exceedance 100.
    assert_eq!(recs[0]["value"].as_f64().unwrap(), 100.0 / 99.0);
}

#[test]
fn help_lists_subcommands_and_flags() {
    let out = run(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for word in [
        "simulate",
        "estimate",
        "extremogram",
        "variance",
        "mc",
        "counterexample",
        "validate",
        "--config",
        "--out",
        "--seed",
        "--workers",
        "--override",
    ] {
        assert!(text.contains(word), "missing {word}");
    }
}

#[test]
fn counterexample_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("counterexample_gaussian.json");
    let out = run(&[
        "counterexample",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "n=20000",
        "--override",
        "replications=20",
        "--override",
        "pilot_multiplier=10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("counterexample.json")).unwrap()).unwrap();
    assert_eq!(rep["regime"], "gaussian");
    assert!(rep["mc"]["records"][0]["sqrt_nfz_factor"].as_f64().is_some());
    assert!(rep["mc"]["records"][0]["sqrt_k_factor"].as_f64().is_some());
}
