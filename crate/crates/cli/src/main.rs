mod output;

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sbc_orbits::continuation::{sweep, ContinuationConfig, MinimizerKind, SweepRecord};
use sbc_orbits::coords::{reg_positions, reg_to_phys, RegState};
use sbc_orbits::dynamics::{time_rate, vector_field_slice};
use sbc_orbits::equalmass::{baseline_from, EqualMassOrbit, BASELINE_K};
use sbc_orbits::integrate::{integrate_with_time, IntegrationConfig};
use sbc_orbits::orbitrep::TrigOrbit;
use sbc_orbits::stability::{analyze_orbit, ClassifyConfig, StabilityReport};
use sbc_orbits::symmetry::{scale_energy, scale_state};

use output::*;

/// Environment override for the stability worker count.
const JOBS_ENV: &str = "SBC_ORBITS_JOBS";

#[derive(Parser)]
#[command(name = "sbc-orbits", version, about = "Symmetric SBC orbits of the pairwise symmetric four-body problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the equal-mass shooting problem and write the baseline orbit.
    SolveEqualMass(SolveArgs),
    /// Continue the orbit down in the mass ratio.
    Sweep(SweepArgs),
    /// Monodromy eigenvalues and stability verdicts for orbit files.
    Stability(StabilityArgs),
    /// Physical positions along an orbit, for plotting.
    ExportTrajectory(ExportArgs),
}

#[derive(Args, Serialize)]
struct SolveArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the shooting constants.
    #[arg(long)]
    report: bool,
    /// Number of terms of the baseline trigonometric orbit.
    #[arg(long, default_value_t = 24)]
    n_terms: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Minimizer {
    Lm,
    Bfgs,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, default_value_t = 1.0)]
    m_from: f64,
    #[arg(long, default_value_t = 0.01)]
    m_to: f64,
    #[arg(long, default_value_t = 0.01)]
    dm: f64,
    /// Output directory for the CSV and the per-mass orbit files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Orbit file to start from. Without it the run starts from the
    /// equal-mass baseline, continued silently down to --m-from if needed.
    #[arg(long)]
    seed: Option<PathBuf>,
    /// Number of terms the continuation works with.
    #[arg(long, default_value_t = 24)]
    n_end: usize,
    #[arg(long, value_enum, default_value_t = Minimizer::Lm)]
    minimizer: Minimizer,
}

#[derive(Args, Serialize)]
struct StabilityArgs {
    /// Orbit files or directories holding orbit_m*.json files.
    #[arg(long, num_args = 0..)]
    orbits: Vec<PathBuf>,
    /// Output CSV.
    #[arg(long, default_value = "stability.csv")]
    out: PathBuf,
    /// Worker threads; 0 uses every logical core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Moduli within this distance of 1 count as on the unit circle.
    #[arg(long, default_value_t = 1e-4)]
    tol_unit: f64,
}

#[derive(Args, Serialize)]
struct ExportArgs {
    #[arg(long)]
    m: f64,
    /// Directory holding orbit_m*.json files.
    #[arg(long, default_value = "out")]
    orbits: PathBuf,
    /// Number of regularized periods to integrate.
    #[arg(long, default_value_t = 1)]
    periods: usize,
    #[arg(long, default_value_t = 8192)]
    steps_per_period: usize,
    /// Output CSV.
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (code, res) = match &cli.command {
        Command::SolveEqualMass(a) => (2, solve_equal_mass(a)),
        Command::Sweep(a) => (3, run_sweep(a)),
        Command::Stability(a) => (4, run_stability(a)),
        Command::ExportTrajectory(a) => (5, export_trajectory(a)),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

#[derive(Serialize)]
struct ShootingFile {
    header: Header,
    theta: f64,
    sigma0: f64,
    energy_e: f64,
    e_hat: f64,
    period: f64,
    physical_period: f64,
    e_hat_2pi: f64,
    eps_2pi: f64,
}

/// Returns `Ok(false)` when the run finished but some item failed.
fn solve_equal_mass(a: &SolveArgs) -> Result<bool> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let header = Header::new("solve-equal-mass", a);
    let eq = EqualMassOrbit::compute(BASELINE_K)?;
    let sh = &eq.shooting;
    let (_, e_2pi) = eq.scaled();
    let base = baseline_from(&eq, a.n_terms)?;

    ensure_dir(&a.out)?;
    let shooting_path = a.out.join("shooting.json");
    write_json(
        &shooting_path,
        &ShootingFile {
            header: header.clone(),
            theta: sh.theta,
            sigma0: sh.sigma0,
            energy_e: sh.energy_e,
            e_hat: sh.e_hat(),
            period: sh.period(),
            physical_period: eq.physical_period(),
            e_hat_2pi: e_2pi,
            eps_2pi: sh.eps_2pi(),
        },
    )?;
    let orbit_path = a.out.join(orbit_file_name(1.0));
    write_json(&orbit_path, &OrbitFile::plain(header.clone(), base))?;

    if a.report {
        println!("theta     = {:.14}", sh.theta);
        println!("sigma0    = {:.14}", sh.sigma0);
        println!("E         = {:.12}", sh.energy_e);
        println!("E_hat     = {:.12}", sh.e_hat());
        println!("T         = {:.12}", sh.period());
        println!("R         = {:.12}", eq.physical_period());
        println!("E_hat(2pi) = {:.12}", e_2pi);
    }
    let mut man = RunManifest::new(header, started, clock.elapsed());
    man.outputs = vec![shooting_path, orbit_path];
    man.write(&manifest_in(&a.out))?;
    Ok(true)
}

fn continuation_config(a: &SweepArgs) -> ContinuationConfig {
    ContinuationConfig {
        dm: a.dm,
        n_end: a.n_end,
        minimizer: match a.minimizer {
            Minimizer::Lm => MinimizerKind::LevenbergMarquardt,
            Minimizer::Bfgs => MinimizerKind::Bfgs,
        },
        ..ContinuationConfig::default()
    }
}

/// Seed orbit at `m_from`.
fn sweep_seed(a: &SweepArgs, cfg: &ContinuationConfig) -> Result<TrigOrbit> {
    if let Some(p) = &a.seed {
        return Ok(OrbitFile::load(p)?.orbit);
    }
    let eq = EqualMassOrbit::compute(BASELINE_K)?;
    let base = baseline_from(&eq, cfg.n_end)?;
    if a.m_from >= 1.0 {
        return Ok(base);
    }
    // the coarse schedule from 1 down to m_from, discarded except its end
    let coarse = ContinuationConfig {
        dm: ContinuationConfig::default().dm,
        ..*cfg
    };
    let recs = sweep(&base, 1.0, a.m_from, &coarse, &mut |r| {
        eprintln!("  approach m = {:.3}  L = {:.2e}", r.m, r.final_l);
    })?;
    match recs.last() {
        Some(r) if !r.flagged => Ok(r.orbit.clone()),
        _ => bail!("no converged orbit at m = {} to start from", a.m_from),
    }
}

const SWEEP_COLUMNS: [&str; 9] = [
    "m",
    "e_hat",
    "final_L",
    "gamma_at_quarter",
    "u3_0",
    "u4_0",
    "v1_0",
    "v2_0",
    "flagged",
];

fn sweep_row(r: &SweepRecord) -> Vec<String> {
    // values at the collision s = 0, where u1 = u2 = v3 = v4 = 0
    let z = r.orbit.eval(0.0);
    vec![
        num(r.m),
        num(r.e_hat),
        num(r.final_l),
        num(r.gamma_at_quarter),
        num(z.u[2]),
        num(z.u[3]),
        num(z.v[0]),
        num(z.v[1]),
        r.flagged.to_string(),
    ]
}

fn run_sweep(a: &SweepArgs) -> Result<bool> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let header = Header::new("sweep", a);
    let cfg = continuation_config(a);
    cfg.validate()?;
    let seed = sweep_seed(a, &cfg)?;

    ensure_dir(&a.out)?;
    let csv_path = a.out.join("sweep.csv");
    let columns: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut w = csv_writer(&csv_path, &header, &columns)?;
    let mut outputs = vec![csv_path.clone()];
    let mut write_err: Option<anyhow::Error> = None;
    let recs = sweep(&seed, a.m_from, a.m_to, &cfg, &mut |r| {
        eprintln!(
            "m = {:.3}  E_hat = {:.10}  L = {:.2e}{}",
            r.m,
            r.e_hat,
            r.final_l,
            if r.flagged { "  FLAGGED" } else { "" }
        );
        let path = a.out.join(orbit_file_name(r.m));
        let res = w
            .write_record(sweep_row(r))
            .map_err(anyhow::Error::from)
            .and_then(|_| w.flush().map_err(anyhow::Error::from))
            .and_then(|_| write_json(&path, &OrbitFile::from_record(header.clone(), r)));
        match res {
            Ok(()) => outputs.push(path),
            Err(e) => {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let mut man = RunManifest::new(header, started, clock.elapsed());
    man.inputs = a.seed.iter().cloned().collect();
    man.outputs = outputs;
    man.write(&manifest_in(&a.out))?;
    let flagged = recs.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        eprintln!("{flagged} of {} steps flagged", recs.len());
    }
    Ok(true)
}

/// Expands directories into their orbit files.
fn orbit_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| {
                    let name = q.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.starts_with("orbit_m") && name.ends_with(".json")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn stability_columns() -> Vec<String> {
    let mut c = vec!["m".to_string(), "max_modulus_excl_trivial".to_string()];
    for k in 1..=8 {
        c.push(format!("re{k}"));
        c.push(format!("im{k}"));
    }
    c.extend(["verdict", "symplectic_defect", "error"].map(String::from));
    c
}

fn stability_row(m: f64, rep: &Result<StabilityReport>) -> Vec<String> {
    let mut row = vec![num(m)];
    match rep {
        Ok(r) => {
            row.push(num(r.max_modulus));
            for z in &r.eigenvalues {
                row.push(num(z.re));
                row.push(num(z.im));
            }
            row.push(r.verdict.to_string());
            row.push(num(r.symplectic_defect));
            row.push(String::new());
        }
        Err(e) => {
            row.extend(std::iter::repeat(num(f64::NAN)).take(17));
            row.push("Failed".into());
            row.push(num(f64::NAN));
            row.push(format!("{e:#}"));
        }
    }
    row
}

fn worker_count(flag: usize) -> Result<usize> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{JOBS_ENV} must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(flag),
    }
}

fn run_stability(a: &StabilityArgs) -> Result<bool> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let header = Header::new("stability", a);
    let paths = orbit_paths(&a.orbits)?;
    let mut orbits = Vec::with_capacity(paths.len());
    for p in &paths {
        orbits.push(OrbitFile::load(p)?.orbit);
    }
    // largest mass first, as the sweep produces them
    orbits.sort_by(|x, y| y.m.total_cmp(&x.m));

    let cfg = ClassifyConfig {
        tol_unit: a.tol_unit,
        ..ClassifyConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count(a.jobs)?).build()?;
    let reports: Vec<Result<StabilityReport>> = pool.install(|| {
        use rayon::prelude::*;
        orbits
            .par_iter()
            .map(|o| analyze_orbit(o, &cfg).map_err(anyhow::Error::from))
            .collect()
    });

    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = csv_writer(&a.out, &header, &stability_columns())?;
    let mut ok = true;
    for (o, rep) in orbits.iter().zip(&reports) {
        match rep {
            Ok(r) => eprintln!("m = {:.3}  max|lambda| = {:.6}  {}", o.m, r.max_modulus, r.verdict),
            Err(e) => {
                ok = false;
                eprintln!("m = {:.3}  failed: {e:#}", o.m);
            }
        }
        w.write_record(stability_row(o.m, rep))?;
    }
    w.flush()?;
    let mut man = RunManifest::new(header, started, clock.elapsed());
    man.inputs = paths;
    man.outputs = vec![a.out.clone()];
    man.write(&manifest_beside(&a.out))?;
    Ok(ok)
}

/// Orbit normalized so that `x1(0) = 1`, starting at the point of the
/// initial family.
struct Normalized {
    start: RegState,
    e_hat: f64,
    eps: f64,
    period: f64,
}

fn normalize(orb: &TrigOrbit) -> Result<Normalized> {
    let start = orb.eval(-FRAC_PI_4);
    let x1 = reg_positions(&start)[0];
    if !(x1 > 0.0) {
        bail!("x1 = {x1} at the start of the orbit; cannot normalize");
    }
    // positions scale with eps^2, the regularized time with 1/eps
    let eps = 1.0 / x1.sqrt();
    Ok(Normalized {
        start: scale_state(&start, eps),
        e_hat: scale_energy(orb.e_hat, eps),
        eps,
        period: 2.0 * PI / eps,
    })
}

fn find_orbit(dir: &Path, m: f64) -> Result<PathBuf> {
    let p = dir.join(orbit_file_name(m));
    if !p.is_file() {
        bail!("no orbit file for m = {m:.3} ({})", p.display());
    }
    Ok(p)
}

fn export_trajectory(a: &ExportArgs) -> Result<bool> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let header = Header::new("export-trajectory", a);
    if a.periods == 0 || a.steps_per_period < 8 || a.steps_per_period % 8 != 0 {
        bail!("need periods >= 1 and steps-per-period a positive multiple of 8");
    }
    let path = find_orbit(&a.orbits, a.m)?;
    let orb = OrbitFile::load(&path)?.orbit;
    let nz = normalize(&orb)?;

    let (m, e) = (orb.m, nz.e_hat);
    let mut field = |_s: f64, y: &[f64], out: &mut [f64]| vector_field_slice(y, out, m, e);
    let rate = |y: &[f64]| time_rate(&RegState::from_array(y));
    let steps = a.periods * a.steps_per_period;
    let span = (0.0, a.periods as f64 * nz.period);
    let cfg = IntegrationConfig::rk4(span.1 / steps as f64);
    let tr = integrate_with_time(&mut field, &rate, &nz.start.to_array(), span, &cfg)?;
    // the physical configuration repeats after half a regularized period
    let r_period = tr.t[a.steps_per_period / 2];
    let omega = reg_to_phys(&nz.start)?.w;

    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut file = std::fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    use std::io::Write;
    file.write_all(header.csv_lines().as_bytes())?;
    writeln!(file, "# m: {m:?}")?;
    writeln!(file, "# normalization: x1(0) = 1, eps = {:?}", nz.eps)?;
    writeln!(file, "# e_hat: {:?}", nz.e_hat)?;
    writeln!(file, "# regularized_period: {:?}", nz.period)?;
    writeln!(file, "# physical_period_R: {r_period:?}")?;
    writeln!(file, "# omega0: {:?} {:?} {:?} {:?}", omega[0], omega[1], omega[2], omega[3])?;
    writeln!(file, "# omega2_0: {:?}", omega[1])?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["s", "t", "x1", "x2", "x3", "x4", "mx1", "mx2", "mx3", "mx4"])?;
    for i in 0..tr.len() {
        let x = reg_positions(&RegState::from_array(&tr.states[i]));
        let mut row = vec![num(tr.s[i]), num(tr.t[i])];
        row.extend(x.iter().map(|v| num(*v)));
        row.extend(x.iter().map(|v| num(-v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut man = RunManifest::new(header, started, clock.elapsed());
    man.inputs = vec![path];
    man.outputs = vec![a.out.clone()];
    man.write(&manifest_beside(&a.out))?;
    Ok(true)
}
