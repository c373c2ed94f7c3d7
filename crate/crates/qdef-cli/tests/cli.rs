use std::path::Path;
use std::process::{Command, Output};

use qdef::backlund::{default_grid, leaf_integrate, regular_init};
use qdef::roulettes::kepler_roll;
use qdef::rolling::{ruled_seed, Profile};
use qdef::{Family, Ruling};
use qdef_cli::export::{parse_csv, parse_obj};
use qdef_cli::report::Report;

fn qdef(args: &[&str], dir: &Path, job: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qdef"));
    cmd.args(args).arg("--out").arg(dir).env_remove("QDEF_THREADS");
    if let Some(text) = job {
        let path = dir.join("job.json");
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(&path, text).unwrap();
        cmd.arg("--job").arg(path);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> Report {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn empty_check_list_passes_with_an_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qdef(&["family"], tmp.path(), Some(r#"{"checks": []}"#));
    assert_eq!(out.status.code(), Some(0));
    let r = report(tmp.path());
    assert!(r.pass && r.checks.is_empty());
    assert!(tmp.path().join("report.timing.json").exists());
}

#[test]
fn ivory_job_on_the_reference_family_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let job = r#"{"family": {"kind": "central", "a1": 4, "a2": -1, "a3": 1}, "samples": 200,
                  "checks": ["ivory.central.length", "ivory.central.ruling_length", "ivory.central.tc_symmetry"]}"#;
    let out = qdef(&["family"], tmp.path(), Some(job));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(r.checks.len(), 3);
    assert!(r.checks.iter().all(|c| c.pass && c.max_residual.unwrap() <= c.tolerance));
}

#[test]
fn zero_tolerance_fails_the_job() {
    let tmp = tempfile::tempdir().unwrap();
    let job = r#"{"samples": 10, "family": {"kind": "central", "a1": 4, "a2": -1, "a3": 1},
                  "tolerances": {"ivory.central.length": 0}}"#;
    assert_eq!(qdef(&["family"], tmp.path(), Some(job)).status.code(), Some(1));
    assert!(!report(tmp.path()).pass);
}

#[test]
fn command_line_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let job = r#"{"samples": 10, "checks": ["motion.central.gram"]}"#;
    let out = qdef(&["family", "--seed", "99", "--tol", "motion.central.gram=1e-300"], tmp.path(), Some(job));
    assert_eq!(out.status.code(), Some(1));
    let r = report(tmp.path());
    assert_eq!(r.environment.seed, 99);
    assert_eq!(r.checks[0].tolerance, 1e-300);
}

#[test]
fn schema_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for job in [
        r#"{"unknown_field": 1}"#,
        r#"{"command": "tt"}"#,
        r#"{"tolerances": {"no.such.check": 1e-3}, "samples": 5}"#,
        r#"{"checks": ["no.such.check"], "samples": 5}"#,
        r#"{"family": {"kind": "central", "a1": 1, "a2": 1, "a3": 2}}"#,
        "[1, 2",
    ] {
        let out = qdef(&["family"], tmp.path(), Some(job));
        assert_eq!(out.status.code(), Some(2), "{job}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = Command::new(env!("CARGO_BIN_EXE_qdef"))
        .args(["verify", "--out"])
        .arg(tmp.path())
        .env("QDEF_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn leaf_mesh_round_trips_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let job = r#"{"family": {"kind": "central", "a1": 4, "a2": -1, "a3": 1}, "grid": {"cells": 16},
                  "spectral": [0.4], "profile": 0.3, "outputs": {"mesh": "leaf.obj"}}"#;
    let out = qdef(&["backlund"], tmp.path(), Some(job));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mesh = parse_obj(&std::fs::read_to_string(tmp.path().join("leaf.obj")).unwrap()).unwrap();
    let f = Family::central(4.0, -1.0, 1.0).unwrap();
    let seed = ruled_seed(f, Profile::constant(0.3), default_grid(&f, 32)).unwrap();
    let leaf = leaf_integrate(&seed, 0.4, regular_init(&f, Ruling::U), Ruling::U).unwrap();
    assert_eq!(mesh.vertices.len(), 33 * 33);
    assert_eq!(mesh.faces.len(), 2 * 32 * 32);
    for (i, j) in seed.grid.nodes() {
        assert_eq!(mesh.vertices[i * 33 + j], leaf.point(i, j));
    }
}

#[test]
fn sixty_four_square_mesh_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let job = r#"{"samples": 1, "grid": {"cells": 63}, "outputs": {"mesh": "patch.obj"}}"#;
    assert_eq!(qdef(&["family"], tmp.path(), Some(job)).status.code(), Some(0));
    let first = std::fs::read(tmp.path().join("patch.obj")).unwrap();
    let mesh = parse_obj(&String::from_utf8(first.clone()).unwrap()).unwrap();
    assert_eq!((mesh.vertices.len(), mesh.faces.len()), (4096, 7938));
    assert_eq!(qdef(&["family"], tmp.path(), Some(job)).status.code(), Some(0));
    assert_eq!(std::fs::read(tmp.path().join("patch.obj")).unwrap(), first);
}

#[test]
fn kepler_trace_columns_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let job = r#"{"roulette": "kepler", "outputs": {"trace": "kepler.csv"}}"#;
    let out = qdef(&["roulette"], tmp.path(), Some(job));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = parse_csv(&std::fs::read(tmp.path().join("kepler.csv")).unwrap()).unwrap();
    let names: Vec<&str> = trace.columns.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["s", "t", "theta", "G", "energy"]);
    let run = kepler_roll(2.0, 3.0, 0.0, (0.0, std::f64::consts::TAU * 2f64.sqrt()), 4097).unwrap();
    assert_eq!(trace.columns[1].1, run.time);
    assert_eq!(trace.columns[3].1, run.radius);
}

#[test]
fn every_command_runs_with_defaults() {
    for (cmd, job) in [
        ("seed", r#"{"outputs": {"mesh": "seed.obj"}}"#),
        ("bpt", r#"{"samples": 20, "grid": {"cells": 16}, "outputs": {"mesh": "x3.obj"}}"#),
        ("ddq", r#"{"outputs": {"mesh": "lattice.obj"}}"#),
        ("geodesic", r#"{"duration": 1.0, "outputs": {"trace": "geodesic.csv"}}"#),
        ("billiard", r#"{"samples": 1, "bounces": 20, "outputs": {"trace": "billiard.csv"}}"#),
        ("roulette", r#"{"roulette": "catenary", "outputs": {"trace": "catenary.csv"}}"#),
        ("tt", r#"{"outputs": {"mesh": "tt.obj"}}"#),
        ("verify", r#"{"criteria": [9, 11]}"#),
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let out = qdef(&[cmd], tmp.path(), Some(job));
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let r = report(tmp.path());
        assert!(!r.checks.is_empty() && r.command == cmd);
    }
}
