use std::collections::BTreeMap;
use std::path::Path;

use qdef::Family;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilySpec {
    Central { a1: f64, a2: f64, a3: f64 },
    Paraboloid { a1: f64, a2: f64 },
}

impl FamilySpec {
    pub fn build(self) -> Result<Family, CliError> {
        let f = match self {
            FamilySpec::Central { a1, a2, a3 } => Family::central(a1, a2, a3),
            FamilySpec::Paraboloid { a1, a2 } => Family::paraboloid(a1, a2),
        };
        f.map_err(|e| CliError::BadSchema(format!("family: {e}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Report file name inside the output directory; `report.json` by default.
    pub report: Option<String>,
    pub mesh: Option<String>,
    pub trace: Option<String>,
}

/// A job file. Every field is optional; commands fall back to the reference
/// configurations of the verification suite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub command: Option<String>,
    pub family: Option<FamilySpec>,
    pub grid: Option<GridSpec>,
    /// Spectral parameters: `z` values, or angles `σ` for `tt`.
    pub spectral: Option<Vec<f64>>,
    /// Initial values of the Ricatti variables.
    pub init: Option<Vec<f64>>,
    /// Ruling profile `φ` of ruled seeds.
    pub profile: Option<f64>,
    /// Random configurations per family.
    pub samples: Option<usize>,
    /// Roulette kind: `catenary`, `delaunay`, `kepler` or `wheel`.
    pub roulette: Option<String>,
    /// Manifold dimension for `tt`.
    pub dimension: Option<usize>,
    pub bounces: Option<usize>,
    pub duration: Option<f64>,
    pub step: Option<f64>,
    /// Acceptance criteria run by `verify`.
    pub criteria: Option<Vec<u8>>,
    #[serde(default)]
    pub outputs: Outputs,
    /// Keeps only the named checks; an empty list runs nothing.
    pub checks: Option<Vec<String>>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

pub const COMMANDS: [&str; 10] =
    ["family", "seed", "backlund", "bpt", "ddq", "geodesic", "billiard", "roulette", "tt", "verify"];

impl JobSpec {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let job: JobSpec = serde_json::from_str(text).map_err(|e| CliError::BadSchema(e.to_string()))?;
        job.validate()?;
        Ok(job)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Tolerances must be finite and non-negative; a zero tolerance is legal
    /// but can never pass.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::BadSchema(m));
        if let Some(c) = &self.command {
            if !COMMANDS.contains(&c.as_str()) {
                return bad(format!("unknown command {c:?}"));
            }
        }
        for (name, &t) in &self.tolerances {
            if !(t.is_finite() && t >= 0.0) {
                return bad(format!("tolerance {name:?} must be finite and non-negative, got {t}"));
            }
        }
        if let Some(g) = self.grid {
            if g.cells < 2 {
                return bad(format!("grid needs at least 2 cells, got {}", g.cells));
            }
        }
        if self.spectral.iter().flatten().chain(self.init.iter().flatten()).any(|x| !x.is_finite()) {
            return bad("spectral parameters and initial values must be finite".into());
        }
        if let Some(crit) = &self.criteria {
            if let Some(k) = crit.iter().find(|&&k| !(1..=12).contains(&k)) {
                return bad(format!("criterion {k} is not one of 1..=12"));
            }
        }
        for (key, v) in [("duration", self.duration), ("step", self.step), ("profile", self.profile)] {
            if v.is_some_and(|x| !x.is_finite()) {
                return bad(format!("{key} must be finite"));
            }
        }
        for (key, v) in [("samples", self.samples), ("bounces", self.bounces), ("dimension", self.dimension)] {
            if v == Some(0) {
                return bad(format!("{key} must be positive"));
            }
        }
        Ok(())
    }

    /// Sets `command` from the subcommand, rejecting a job written for another one.
    pub fn bind(&mut self, command: &str) -> Result<(), CliError> {
        match &self.command {
            Some(c) if c != command => {
                Err(CliError::BadSchema(format!("job is for command {c:?}, not {command:?}")))
            }
            _ => {
                self.command = Some(command.to_string());
                Ok(())
            }
        }
    }

    /// Applies `name=value` overrides from the command line.
    pub fn override_tolerances(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for p in pairs {
            let (name, val) = p
                .split_once('=')
                .ok_or_else(|| CliError::BadSchema(format!("--tol expects name=value, got {p:?}")))?;
            let v: f64 = val.parse().map_err(|_| CliError::BadSchema(format!("--tol {name}: bad number {val:?}")))?;
            self.tolerances.insert(name.to_string(), v);
        }
        self.validate()
    }

    pub fn spectral_or(&self, default: &[f64]) -> Vec<f64> {
        self.spectral.clone().unwrap_or_else(|| default.to_vec())
    }
}
