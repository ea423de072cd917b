//! End-to-end exercises of the binary: exit codes, emitted files, strict
//! schema handling, and byte-identical reruns.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twistbound"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("twistbound_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const FAST_SCENARIO: &str = r#"
name = "fast_check"
checks = ["t2"]

[operator]
kind = "kfp_quadratic"
omega = 1.0

[certificate]
source = "closed_form"
slack = 0.05

[numerics]
trials = 50
seed = 7
"#;

#[test]
fn run_writes_report_and_series_and_exits_zero() {
    let dir = temp_dir("run_ok");
    let config = dir.join("fast.toml");
    std::fs::write(&config, FAST_SCENARIO).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.join("fast_check.report.json")).unwrap();
    assert!(report.contains("\"t2_inequality\""));
    assert!(std::fs::metadata(dir.join("fast_check.series.csv")).is_ok());
    let csv = std::fs::read_to_string(dir.join("fast_check.series.csv")).unwrap();
    assert!(csv.starts_with("check,time,value,stderr,seed"));
}

#[test]
fn malformed_config_exits_two_with_located_message() {
    let dir = temp_dir("schema");
    let config = dir.join("broken.toml");
    // kfp_perturbed requires eps; also sneak in an unknown field.
    std::fs::write(
        &config,
        r#"
name = "broken"
checks = ["t2"]
unknown_knob = 3

[operator]
kind = "kfp_perturbed"
omega = 1.0
"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line"), "message should be line-anchored: {msg}");
}

#[test]
fn infeasible_certificate_exits_one_quoting_the_condition() {
    let dir = temp_dir("infeasible");
    let config = dir.join("wide.toml");
    std::fs::write(
        &config,
        r#"
name = "wide_bounds"
checks = ["t2"]

[operator]
kind = "kfp_perturbed"
omega = 1.0
eps = 0.9

[certificate]
source = "closed_form"
slack = 0.0
"#,
    )
    .unwrap();
    // Hessian range [0.1, 1.9]: √1.9 − √0.1 ≈ 1.06 > 1 → infeasible.
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("sqrt(M) - sqrt(m)"),
        "infeasibility should quote the feasibility condition: {msg}"
    );
}

#[test]
fn rerun_is_byte_identical() {
    let dir_a = temp_dir("rerun_a");
    let dir_b = temp_dir("rerun_b");
    let config = dir_a.join("fast.toml");
    std::fs::write(&config, FAST_SCENARIO).unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir_a.join("fast_check.report.json")).unwrap();
    let b = std::fs::read(dir_b.join("fast_check.report.json")).unwrap();
    assert_eq!(a, b, "rerun must produce byte-identical report JSON");
}

#[test]
fn certify_kfp_emits_the_certificate_document() {
    let out = bin()
        .args(["certify-kfp", "--m", "1.0", "--M", "2.25", "--slack", "0.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc = String::from_utf8_lossy(&out.stdout);
    let parsed: toml::Value = toml::from_str(&doc).unwrap();
    assert!((parsed["a"].as_float().unwrap() - 0.9330127018922193).abs() < 1e-12);
    assert!((parsed["b"].as_float().unwrap() - 2.4330127018922193).abs() < 1e-12);
    assert_eq!(parsed["root_choice"].as_str(), Some("larger"));
    assert_eq!(parsed["slack"].as_float(), Some(0.0));
}

#[test]
fn certify_kfp_rejects_wide_bounds() {
    let out = bin()
        .args(["certify-kfp", "--m", "1.0", "--M", "4.1", "--slack", "0.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sqrt(M) - sqrt(m)"));
}

#[test]
fn find_sigma_runs_from_config() {
    let dir = temp_dir("sigma");
    let config = dir.join("sigma.toml");
    std::fs::write(
        &config,
        r#"
name = "ou_sigma"
jacobians = [[[-1.0, 0.0], [0.0, -1.0]]]
"#,
    )
    .unwrap();
    let out_file = dir.join("cert.json");
    let out = bin()
        .args(["find-sigma", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_file)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = std::fs::read_to_string(&out_file).unwrap();
    assert!(doc.contains("Certificate"));
}

#[test]
fn report_summary_prints_verdicts() {
    let dir = temp_dir("summary");
    let config = dir.join("fast.toml");
    std::fs::write(&config, FAST_SCENARIO).unwrap();
    bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    let out = bin()
        .args(["report", "--in"])
        .arg(dir.join("fast_check.report.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("t2_inequality"));
    assert!(text.contains("pass"));
}

#[test]
fn builtin_demo_passes_and_reports_the_expected_certificate() {
    let dir = temp_dir("builtin");
    let out = bin()
        .args(["run", "--builtin", "kfp_quadratic_demo", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("kfp_quadratic_demo.report.json")).unwrap())
            .unwrap();
    // ω = 1 gives a ≈ 1, b ≈ 2 (solved on the slack-widened window).
    let a = report["certificate"]["a"].as_f64().unwrap();
    let b = report["certificate"]["b"].as_f64().unwrap();
    assert!((a - 1.0).abs() < 0.01, "a = {a}");
    assert!((b - 2.0).abs() < 0.01, "b = {b}");
    assert_eq!(report["summary"]["fail"].as_u64(), Some(0));
}
