use std::path::Path;
use std::process::{Command, Output};

fn qscorer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qscorer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(qscorer(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(qscorer(&["bogus"]).status.code(), Some(2));
}

#[test]
fn softlabel_rejects_non_positive_sigma_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = qscorer(&[
        "softlabel",
        "--mu",
        "3",
        "--sigma",
        "-0.5",
        "--out-dir",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
}

#[test]
fn softlabel_report_satisfies_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let out = qscorer(&[
        "softlabel",
        "--mu",
        "3.4",
        "--sigma",
        "0.6",
        "--out-dir",
        &out_arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("softlabel.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["enhanced"]["sum_residual"].as_f64().unwrap().abs() < 1e-12);
    assert!(report["enhanced"]["mean_residual"].as_f64().unwrap().abs() < 1e-12);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn config_with_wrong_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let first = qscorer(&[
        "softlabel",
        "--mu",
        "3",
        "--sigma",
        "0.5",
        "--out-dir",
        &out_arg(dir.path()),
    ]);
    assert!(first.status.success());
    let manifest = dir.path().join("manifest.json");
    let out = qscorer(&[
        "--config",
        manifest.to_str().unwrap(),
        "train",
        "--out-dir",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_one_row_per_head() {
    let dir = tempfile::tempdir().unwrap();
    let out = qscorer(&[
        "compare",
        "--n",
        "300",
        "--epochs",
        "3",
        "--out-dir",
        &out_arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut rdr = csv::Reader::from_path(dir.path().join("compare.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "head"));
    let heads: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(heads, ["qscorer", "qalign", "deqa", "linear"]);
}
