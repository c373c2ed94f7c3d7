use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdef_cli::{exit_code, run_job, thread_cap, CliError, JobSpec};

#[derive(Parser)]
#[command(name = "qdef", version, about = "Deformations of quadrics: jobs, exports and verification reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ivory affinity and rigid-motion checks on a confocal family.
    Family(Common),
    /// Ruled seed and its flat connection.
    Seed(Common),
    /// Bäcklund leaf of a ruled seed.
    Backlund(Common),
    /// Bianchi permutability: quadrilaterals, leaves and cubes.
    Bpt(Common),
    /// Discrete deformation lattice.
    Ddq(Common),
    /// Geodesic on the reference member and its caustic.
    Geodesic(Common),
    /// Billiard in a confocal ellipsoid.
    Billiard(Common),
    /// Roulettes: catenary, delaunay, kepler or wheel.
    Roulette(Common),
    /// Higher-dimensional transformation of the pseudosphere.
    Tt(Common),
    /// The acceptance suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON job file; defaults apply when omitted.
    #[arg(long)]
    job: Option<PathBuf>,
    /// Output directory for the report and exports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VAL")]
    tol: Vec<String>,
    /// Random seed, overriding the job's.
    #[arg(long)]
    seed: Option<u64>,
}

fn split(cmd: Command) -> (&'static str, Common) {
    match cmd {
        Command::Family(c) => ("family", c),
        Command::Seed(c) => ("seed", c),
        Command::Backlund(c) => ("backlund", c),
        Command::Bpt(c) => ("bpt", c),
        Command::Ddq(c) => ("ddq", c),
        Command::Geodesic(c) => ("geodesic", c),
        Command::Billiard(c) => ("billiard", c),
        Command::Roulette(c) => ("roulette", c),
        Command::Tt(c) => ("tt", c),
        Command::Verify(c) => ("verify", c),
    }
}

fn run(name: &str, common: Common) -> Result<u8, CliError> {
    if let Some(n) = thread_cap()? {
        // Fails only if a pool was already built, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut job = match &common.job {
        Some(path) => JobSpec::load(path)?,
        None => JobSpec::default(),
    };
    if let Some(seed) = common.seed {
        job.seed = seed;
    }
    job.override_tolerances(&common.tol)?;
    let outcome = run_job(name, job, &common.out)?;
    for c in &outcome.report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let r = c.max_residual.map_or("error".to_string(), |r| format!("{r:.3e}"));
        eprintln!("{status} {} {r} (tol {:.1e})", c.name, c.tolerance);
    }
    eprintln!("report: {}", outcome.report_path.display());
    Ok(exit_code(&outcome.report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = split(cli.command);
    match run(name, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("qdef: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
