use std::path::{Path, PathBuf};
use std::time::Instant;

use qdef::backlund::regular_init;
use qdef::geodesics::jacobi_caustic;
use qdef::highdim::{pseudosphere_field, tt_transform, TtParams};
use qdef::{Family, Ruling};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::export::{export_mesh, export_trace, PointGrid, Trace};
use crate::job::JobSpec;
use crate::report::{write_atomic, Check, Environment, Report, Timing};
use crate::suite::{self, reference_families, Collector, SuiteOptions};
use crate::CliError;

/// A finished job: its report and where the files went.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub report_path: PathBuf,
    pub written: Vec<PathBuf>,
}

/// Artifacts a command may export besides its report.
#[derive(Default)]
struct Artifacts {
    mesh: Option<PointGrid>,
    trace: Option<Trace>,
}

fn families(job: &JobSpec) -> Result<Vec<Family>, CliError> {
    match job.family {
        Some(spec) => Ok(vec![spec.build()?]),
        None => Ok(reference_families().to_vec()),
    }
}

fn first_family(job: &JobSpec) -> Result<Family, CliError> {
    Ok(families(job)?[0])
}

fn cells(job: &JobSpec, default: usize) -> usize {
    job.grid.map_or(default, |g| g.cells)
}

fn pair(job: &JobSpec, default: [f64; 2]) -> Result<[f64; 2], CliError> {
    let z = job.spectral_or(&default);
    z.try_into().map_err(|_| CliError::BadSchema("this command takes exactly two spectral parameters".into()))
}

fn grid_mesh(grid: &qdef::grid::Grid2, points: &[nalgebra::Vector3<f64>]) -> Result<PointGrid, CliError> {
    let pts = (0..grid.nu).flat_map(|i| (0..grid.nv).map(move |j| (i, j))).map(|(i, j)| points[grid.idx(i, j)]).collect();
    PointGrid::new(grid.nu, grid.nv, pts)
}

fn rng(job: &JobSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(job.seed)
}

fn run_command(command: &str, job: &JobSpec, c: &mut Collector) -> Result<Artifacts, CliError> {
    let mut out = Artifacts::default();
    match command {
        "family" => {
            let mut rng = rng(job);
            let n = job.samples.unwrap_or(1000);
            let fams = families(job)?;
            for f in &fams {
                suite::ivory_suite(c, f, n, &mut rng);
                suite::motion_suite(c, f, n, &mut rng);
            }
            let f = fams[0];
            let grid = qdef::backlund::default_grid(&f, cells(job, 32));
            out.mesh = Some(grid_mesh(&grid, &grid.sample(|u, v| f.point(0.0, u, v)))?);
        }
        "seed" => {
            let f = first_family(job)?;
            let phi = job.profile.unwrap_or(0.3);
            let n = cells(job, 16);
            suite::flatness_suite(c, &f, phi, n);
            if let Ok(seed) = suite::ruled(&f, phi, 2 * n) {
                out.mesh = Some(grid_mesh(&seed.grid, &seed.points)?);
            }
        }
        "backlund" => {
            let f = first_family(job)?;
            let z = job.spectral_or(&[0.4])[0];
            let phi = job.profile.unwrap_or(0.3);
            let n = cells(job, 16);
            match job.init.as_deref() {
                Some([a, b, cc, d]) => suite::cross_ratio_suite(c, &f, z, phi, [*a, *b, *cc, *d], 2 * n),
                Some([init]) => {
                    if let Some(leaf) = suite::acpia_suite(c, &f, z, phi, *init, n) {
                        out.mesh = Some(grid_mesh(&leaf.grid, &leaf.points)?);
                    }
                }
                None => {
                    if let Some(leaf) = suite::acpia_suite(c, &f, z, phi, regular_init(&f, Ruling::U), n) {
                        out.mesh = Some(grid_mesh(&leaf.grid, &leaf.points)?);
                    }
                }
                Some(_) => return Err(CliError::BadSchema("backlund takes one initial value, or four for cross-ratios".into())),
            }
        }
        "bpt" => {
            let f = first_family(job)?;
            let z = pair(job, [0.4, 0.2])?;
            suite::closure_suite(c, &f, job.samples.unwrap_or(100), &mut rng(job));
            if let Some(b) = suite::bpt_suite(c, &f, z, job.profile.unwrap_or(0.3), cells(job, 64)) {
                out.mesh = Some(grid_mesh(&b.grid, &b.points)?);
            }
            suite::mobius_suite(c, &f, job.samples.unwrap_or(100), &mut rng(job));
        }
        "ddq" => {
            let f = first_family(job).or_else(|_| Ok::<_, CliError>(reference_families()[0]))?;
            let n = cells(job, 8);
            if let Some(lat) = suite::ddq_suite(c, &f, n, pair(job, [0.3, 0.6])?) {
                out.mesh = Some(PointGrid::new(n, n, lat.points.clone())?);
            }
        }
        "geodesic" => {
            let f = first_family(job)?;
            let step = job.step.unwrap_or(1e-3);
            if let Some(t) = suite::geodesic_suite(c, &f, job.duration.unwrap_or(10.0), step) {
                let zc = jacobi_caustic(&t).map(|s| s.z_c).unwrap_or_else(|_| vec![f64::NAN; t.states.len()]);
                let time = (0..t.states.len()).map(|k| k as f64 * step).collect();
                let xyz = |k: usize| t.states.iter().map(|s| s.x[k]).collect();
                out.trace = Some(Trace::with_names(&["t", "x", "y", "z", "caustic"], vec![time, xyz(0), xyz(1), xyz(2), zc])?);
            }
        }
        "billiard" => {
            let f = match job.family {
                Some(s) => s.build()?,
                None => reference_families()[0],
            };
            let z = pair(job, [-3.0, -1.5])?;
            let runs = suite::billiard_suite(c, &f, z, job.samples.unwrap_or(5), job.bounces.unwrap_or(100), &mut rng(job));
            if let Some(b) = runs.first() {
                let col = |g: &dyn Fn(usize) -> f64| (0..b.impacts.len()).map(g).collect::<Vec<f64>>();
                out.trace = Some(Trace::with_names(
                    &["k", "x", "y", "z", "dx", "dy", "dz"],
                    vec![
                        col(&|k| k as f64),
                        col(&|k| b.impacts[k].x),
                        col(&|k| b.impacts[k].y),
                        col(&|k| b.impacts[k].z),
                        col(&|k| b.directions[k].x),
                        col(&|k| b.directions[k].y),
                        col(&|k| b.directions[k].z),
                    ],
                )?);
            }
        }
        "roulette" => {
            let xy = |r: &qdef::roulettes::Roulette| {
                Trace::with_names(
                    &["s", "x", "y"],
                    vec![r.params.clone(), r.trace.iter().map(|p| p.x).collect(), r.trace.iter().map(|p| p.y).collect()],
                )
            };
            match job.roulette.as_deref().unwrap_or("kepler") {
                "catenary" => out.trace = suite::catenary_suite(c).map(|r| xy(&r.roulette)).transpose()?,
                "delaunay" => out.trace = suite::delaunay_suite(c, job.spectral_or(&[2.0])[0]).map(|r| xy(&r.roulette)).transpose()?,
                "wheel" => out.trace = suite::wheel_suite(c).map(|r| xy(&r.roulette)).transpose()?,
                "kepler" => {
                    let abz = job.spectral_or(&[2.0, 3.0, 0.0]);
                    let [a, b, z] = abz[..] else {
                        return Err(CliError::BadSchema("kepler takes spectral parameters [a, b, z]".into()));
                    };
                    if let Some(r) = suite::kepler_suite(c, a, b, z) {
                        out.trace = Some(Trace::with_names(
                            &["s", "t", "theta", "G", "energy"],
                            vec![r.roulette.params.clone(), r.time.clone(), r.theta.clone(), r.radius.clone(), r.energy.clone()],
                        )?);
                    }
                }
                other => return Err(CliError::BadSchema(format!("unknown roulette {other:?}"))),
            }
        }
        "tt" => {
            let n = job.dimension.unwrap_or(2);
            if !(2..=3).contains(&n) {
                return Err(CliError::BadSchema(format!("tt supports dimensions 2 and 3, got {n}")));
            }
            let sigma: [f64; 3] = job
                .spectral_or(&[0.7, 1.1, 2.0])
                .try_into()
                .map_err(|_| CliError::BadSchema("tt takes three angles".into()))?;
            let g = cells(job, if n == 2 { 32 } else { 16 });
            if g < 8 || g % 2 != 0 {
                return Err(CliError::BadSchema(format!("tt needs an even cell count of at least 8, got {g}")));
            }
            if n != 2 && job.outputs.mesh.is_some() {
                return Err(CliError::BadSchema("mesh export needs a two-dimensional leaf".into()));
            }
            if let Some(a1) = suite::tt_suite(c, n, sigma, g) {
                if n == 2 {
                    let grid = suite::tt_patch(2, g);
                    let params = TtParams::new(2, sigma[0]).map_err(|e| CliError::BadSchema(e.to_string()))?;
                    let leaf = pseudosphere_field(&suite::tt_lambda(2), &grid)
                        .and_then(|(_, a0, seed)| tt_transform(&seed, &a0, &a1, &params));
                    match leaf {
                        Ok(imm) => {
                            let pts = imm.points.iter().map(|p| nalgebra::Vector3::new(p.x[0], p.x[1], p.x[2])).collect();
                            out.mesh = Some(PointGrid::new(g + 1, g + 1, pts)?);
                        }
                        Err(e) => c.fail("tt.n2.leaf_immersion", 1e-8, e),
                    }
                }
            }
        }
        "verify" => {}
        other => return Err(CliError::BadSchema(format!("unknown command {other:?}"))),
    }
    Ok(out)
}

fn verify_checks(job: &JobSpec) -> Vec<Check> {
    let ids = job.criteria.clone().unwrap_or_else(|| suite::CRITERIA.iter().map(|c| c.id).collect());
    let opts = SuiteOptions { seed: job.seed };
    suite::run_criteria(&ids, opts)
        .into_iter()
        .flat_map(|(id, checks)| {
            checks.into_iter().map(move |mut c| {
                c.name = format!("c{id}.{}", c.name);
                c
            })
        })
        .collect()
}

/// Applies the job's check filter and tolerance overrides.
fn finalize(job: &JobSpec, checks: Vec<Check>) -> Result<Vec<Check>, CliError> {
    for name in job.tolerances.keys() {
        if !checks.iter().any(|c| &c.name == name) {
            return Err(CliError::BadSchema(format!("tolerance override for unknown check {name:?}")));
        }
    }
    let mut checks: Vec<Check> = checks
        .into_iter()
        .map(|c| match job.tolerances.get(&c.name) {
            Some(&t) => c.with_tolerance(t),
            None => c,
        })
        .collect();
    if let Some(keep) = &job.checks {
        if let Some(name) = keep.iter().find(|n| !checks.iter().any(|c| &&c.name == n)) {
            return Err(CliError::BadSchema(format!("unknown check {name:?}")));
        }
        checks.retain(|c| keep.contains(&c.name));
    }
    Ok(checks)
}

fn resolve(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}

/// Runs `job` as `command` and writes its outputs under `out_dir`.
///
/// Outputs are written one after another from this thread; the report goes last.
pub fn run_job(command: &str, mut job: JobSpec, out_dir: &Path) -> Result<Outcome, CliError> {
    job.bind(command)?;
    job.validate()?;
    let start = Instant::now();
    let threads = rayon::current_num_threads();
    let mut written = Vec::new();
    let checks = if job.checks.as_ref().is_some_and(|k| k.is_empty()) {
        Vec::new()
    } else if command == "verify" {
        finalize(&job, verify_checks(&job))?
    } else {
        let mut c = Collector::default();
        let art = run_command(command, &job, &mut c)?;
        let checks = finalize(&job, c.finish())?;
        if let Some(name) = &job.outputs.mesh {
            let mesh = art.mesh.ok_or_else(|| CliError::Export(format!("{command} produced no mesh")))?;
            let path = resolve(out_dir, name);
            export_mesh(&mesh, &path)?;
            written.push(path);
        }
        if let Some(name) = &job.outputs.trace {
            let trace = art.trace.ok_or_else(|| CliError::Export(format!("{command} produced no trace")))?;
            let path = resolve(out_dir, name);
            export_trace(&trace, &path)?;
            written.push(path);
        }
        checks
    };
    let report = Report::new(command, checks, Environment::current(threads, job.seed));
    let report_path = resolve(out_dir, job.outputs.report.as_deref().unwrap_or("report.json"));
    write_atomic(&report_path, report.to_json().as_bytes())?;
    let timing = Timing { command: command.to_string(), wall_time_s: start.elapsed().as_secs_f64() };
    let timing_path = report_path.with_extension("timing.json");
    write_atomic(&timing_path, serde_json::to_string_pretty(&timing).expect("serializes").as_bytes())?;
    written.push(timing_path);
    Ok(Outcome { report, report_path, written })
}
