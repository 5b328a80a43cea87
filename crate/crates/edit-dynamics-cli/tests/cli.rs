//! Exit-code and round-trip behavior of the binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edit-dynamics"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().arg("--bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_without_input_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["ingest", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input"));
}

#[test]
fn analyze_without_histories_is_total_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["analyze", "--out"])
        .arg(tmp.path().join("missing"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fit_without_spectrum_is_total_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["fit", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ingest_then_analyze_matches_direct_fixture_analyze() {
    let ingested = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["ingest", "--fixtures"])
        .arg(fixtures())
        .arg("--out")
        .arg(ingested.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(ingested.path().join("histories/page_00000001.csv").is_file());
    assert!(ingested.path().join("pages.csv").is_file());

    let status = bin().args(["analyze", "--out"]).arg(ingested.path()).status().unwrap();
    assert!(status.success());

    let direct = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["analyze", "--fixtures"])
        .arg(fixtures())
        .arg("--out")
        .arg(direct.path())
        .status()
        .unwrap();
    assert!(status.success());

    for name in ["episodes.csv", "reverts.csv", "fig4_spectrum.csv"] {
        let a = std::fs::read(ingested.path().join(name)).unwrap();
        let b = std::fs::read(direct.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between ingest round trip and direct analyze");
    }
}

#[test]
fn simulate_is_seed_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let status = bin()
            .args(["simulate", "--beta", "1.0", "--nbar", "8", "--episodes", "2000", "--seed", "5", "--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let sa = std::fs::read(a.path().join("sim_spectrum.csv")).unwrap();
    let sb = std::fs::read(b.path().join("sim_spectrum.csv")).unwrap();
    assert_eq!(sa, sb);
}
