use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_blochlab"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn list_presets_prints_every_name() {
    let out = bin().arg("list-presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in blochlab::experiments::PRESETS {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn run_preset_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = bin().args(["run", "mesoscopic-ring", "--workers", "1", "--out"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("PASS"));
    assert!(std::fs::read_to_string(&path).unwrap().lines().count() > 10);
}

#[test]
fn unknown_experiment_and_bad_flags_fail() {
    let out = bin().args(["run", "no-such-experiment"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown experiment"));
    let out = bin().args(["--tol-scale", "-1", "list-presets"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn tiny_tolerance_scale_fails_a_check() {
    let out = bin().args(["--tol-scale", "1e-9", "accept", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("FAIL [1]"));
}

#[test]
fn accept_runs_selected_criteria() {
    let out = bin().args(["accept", "2", "11"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
}
