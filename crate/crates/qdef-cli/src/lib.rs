//! Job runner for `qdef`: JSON jobs in, JSON reports, OBJ meshes and CSV
//! traces out. The verification suite behind `qdef verify` lives in [`suite`].

use std::path::PathBuf;

pub mod commands;
pub mod export;
pub mod job;
pub mod report;
pub mod suite;

pub use commands::{run_job, Outcome};
pub use job::JobSpec;
pub use report::{Check, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("bad job schema: {0}")]
    BadSchema(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("export: {0}")]
    Export(String),
}

impl CliError {
    /// Every error stops the job before a report exists, which the exit code
    /// contract files under the schema/usage code.
    pub fn exit_code(&self) -> u8 {
        2
    }
}

/// Exit code of a finished job: 0 when every check passes, 1 otherwise.
pub fn exit_code(report: &Report) -> u8 {
    if report.pass {
        0
    } else {
        1
    }
}

/// Worker count from `QDEF_THREADS`; `None` when unset or empty.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("QDEF_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::BadSchema(format!("QDEF_THREADS must be a positive integer, got {v:?}"))),
        },
        _ => Ok(None),
    }
}
