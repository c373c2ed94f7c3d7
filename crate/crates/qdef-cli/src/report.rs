use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// One verified quantity. `pass` holds exactly when the residual is finite,
/// the tolerance positive and `max_residual <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `null` in JSON when the computation failed.
    pub max_residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let max_residual = residual.is_finite().then_some(residual);
        let mut c = Check { name: name.into(), max_residual, tolerance, pass: false, note: None };
        c.judge();
        c
    }

    pub fn failed(name: impl Into<String>, tolerance: f64, why: impl std::fmt::Display) -> Self {
        Check { name: name.into(), max_residual: None, tolerance, pass: false, note: Some(why.to_string()) }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.judge();
        self
    }

    fn judge(&mut self) {
        self.pass = self.tolerance > 0.0 && self.max_residual.is_some_and(|r| r <= self.tolerance);
    }
}

/// Build and run metadata echoed into every report. Nothing time-dependent
/// goes here, so equal jobs give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub qdef_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub seed: u64,
}

impl Environment {
    pub fn current(threads: usize, seed: u64) -> Self {
        Environment {
            qdef_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub environment: Environment,
}

impl Report {
    pub fn new(command: &str, checks: Vec<Check>, environment: Environment) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Report { command: command.to_string(), pass, checks, environment }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Wall time lives beside the report so the report itself stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_time_s: f64,
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}
