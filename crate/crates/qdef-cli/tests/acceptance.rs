//! The thirteen acceptance criteria, one PASS/FAIL line each.
//! Run with `cargo test -p qdef-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;

use qdef_cli::report::Report;
use qdef_cli::suite::{criterion, run_criteria, SuiteOptions, CRITERIA};

const SEED: u64 = 20_240_601;

fn verify(dir: &Path, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_qdef"))
        .args(["verify", "--seed", &SEED.to_string(), "--out"])
        .arg(dir)
        .env("QDEF_THREADS", threads)
        .output()
        .expect("qdef runs");
    assert!(status.status.code().is_some(), "qdef was killed");
    std::fs::read(dir.join("report.json")).expect("report written")
}

/// Repeated runs give the same bytes; a different worker count gives the same checks.
fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    let first = verify(&dirs[0], "2");
    let second = verify(&dirs[1], "2");
    let single = verify(&dirs[2], "1");
    let parse = |b: &[u8]| serde_json::from_slice::<Report>(b).expect("report parses");
    let same_bytes = first == second;
    let same_checks = parse(&first).checks == parse(&single).checks;
    let n = parse(&first).checks.len();
    (same_bytes && same_checks && n > 0, format!("{n} checks, identical bytes: {same_bytes}, thread-independent: {same_checks}"))
}

#[test]
fn acceptance() {
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.id).collect();
    let mut failed = Vec::new();
    for (id, checks) in run_criteria(&ids, SuiteOptions { seed: SEED }) {
        let title = criterion(id).unwrap().title;
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        println!("criterion {id:>2} {}: {title} ({} checks)", if pass { "PASS" } else { "FAIL" }, checks.len());
        for c in checks.iter().filter(|c| !c.pass) {
            println!("    {} residual {:?} > {:e} {}", c.name, c.max_residual, c.tolerance, c.note.as_deref().unwrap_or(""));
        }
        if !pass {
            failed.push(id);
        }
    }
    let (pass, detail) = determinism();
    println!("criterion 13 {}: Determinism of verify reports ({detail})", if pass { "PASS" } else { "FAIL" });
    if !pass {
        failed.push(13);
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
