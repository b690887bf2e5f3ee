//! `wbundle` command line.
//!
//! Every subcommand prints one JSON report (or writes it to `--out`)
//! holding the run configuration, a SHA-256 of configuration and inputs,
//! and the result. Exit status: 0 on success, 1 when an audit fails or a
//! solver does not converge, 2 on invalid configuration or input.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use wbundle::energy::{lp_energy, monopole_ball_energy, monotonicity_audit, rescaled_energy_profile};
use wbundle::field::{AnalyticField, Ball, GridField, VectorField};
use wbundle::metric::{slice_distance, DistanceOptions};
use wbundle::plateau::{outer_search, trace_profile, BoundaryData, PlateauOptions, TraceOptions, TRACE_RHO};
use wbundle::report::AuditReport;
use wbundle::slices::{blowup_experiment, holder_audit, metrization_experiment, HolderConfig};
use wbundle::sphere::harmonics::{integrate_faces, random_smooth};
use wbundle::sphere::{SphereMesh, TwoCochain, Vec3};

use output::{content_hash, emit, emit_plot_data, report};

/// Thread count of the worker pool; the only environment setting read.
const THREADS_ENV: &str = "WBUNDLE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Core(#[from] wbundle::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("audit failed: {}", .0.join("; "))]
    Audit(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Audit(_) | Self::Core(wbundle::Error::NoConvergence { .. }) => 1,
            _ => 2,
        }
    }
}

type Res<T> = Result<T, CliError>;

#[derive(Debug, Parser, Serialize)]
#[command(name = "wbundle", version, about = "Slice distances, integer-flux fields and L^p Plateau solves")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Keep wall-clock timings in the report (breaks byte-identical reruns).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Icosphere statistics; optionally its OFF file and a random cochain.
    Mesh(MeshArgs),
    /// Slice distance between two cochain CSVs.
    Dist(DistArgs),
    /// Flux of a field through a sphere.
    Flux(SphereArgs),
    /// Restriction of a field to a sphere, written as a cochain CSV.
    Slice(SliceArgs),
    /// Hölder audit of the slice map over random admissible ball pairs.
    Holder(HolderArgs),
    /// L^p energy of a field in a ball.
    Energy(EnergyArgs),
    /// Monotonicity identity and rescaled energy profile.
    Monotonicity(MonotonicityArgs),
    /// Blow-up slope of the slice norm near a charge.
    Blowup(BlowupArgs),
    /// Slice distance against weak convergence for oscillating bands.
    Metrize(MetrizeArgs),
    /// Energy minimization with prescribed boundary datum on the unit ball.
    Plateau(PlateauArgs),
    /// Distance of interior slices to a boundary datum.
    Trace(TraceArgs),
    /// Every acceptance criterion.
    AuditAll(AuditAllArgs),
}

#[derive(Debug, Args, Serialize)]
struct MeshArgs {
    #[arg(long, default_value_t = 3)]
    level: u32,
    /// Write the mesh as OFF.
    #[arg(long)]
    off: Option<PathBuf>,
    /// Write a random smooth cochain of degree `--degree` as CSV.
    #[arg(long)]
    random: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    degree: i64,
    #[arg(long, default_value_t = 3)]
    bumps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct DistArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    h1: PathBuf,
    #[arg(long)]
    h2: PathBuf,
    #[arg(long, default_value_t = 3)]
    level: u32,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct FieldArg {
    /// Analytic field as JSON; the unit monopole at the origin if absent.
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SphereArgs {
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    center: Point,
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 3)]
    level: u32,
}

#[derive(Debug, Args, Serialize)]
struct SliceArgs {
    #[command(flatten)]
    sphere: SphereArgs,
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct HolderArgs {
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    level: u32,
    #[arg(long, default_value_t = 0.05)]
    min_radius: f64,
    /// Skip the per-segment comparison.
    #[arg(long)]
    no_segments: bool,
}

#[derive(Debug, Args, Serialize)]
struct EnergyArgs {
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    center: Point,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Also rasterize on an n³ grid covering the ball.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct MonotonicityArgs {
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    center: Point,
    #[arg(long, default_value_t = 0.1)]
    rmin: f64,
    #[arg(long, default_value_t = 0.9)]
    rmax: f64,
    #[arg(long, default_value_t = 16)]
    radii: usize,
    /// Write `(r, E_rescaled)` plot data.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BlowupArgs {
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    #[arg(long, default_value_t = 8)]
    level: u32,
    /// Write `(log ρ, log ∫|h|^p)` plot data.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct MetrizeArgs {
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    #[arg(long, default_value_t = 5)]
    level: u32,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16, 32])]
    bands: Vec<usize>,
    /// Amplitude growth `l^e` of the oscillating term.
    #[arg(long, default_value_t = 0.0)]
    amplitude_exponent: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct BoundaryArg {
    /// `constant:<k>`, `two-lobe`, or a cochain CSV on the `--phi-level` mesh.
    #[arg(long, default_value = "constant:1")]
    phi: String,
    #[arg(long, default_value_t = 3)]
    phi_level: u32,
}

#[derive(Debug, Args, Serialize)]
struct PlateauArgs {
    #[command(flatten)]
    boundary: BoundaryArg,
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    /// Cells per axis over [-1, 1]³.
    #[arg(long, default_value_t = 48)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Write the minimizing field here.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    /// Also run the trace check of the minimizer against the datum.
    #[arg(long)]
    check_trace: bool,
}

#[derive(Debug, Args, Serialize)]
struct TraceArgs {
    #[command(flatten)]
    boundary: BoundaryArg,
    /// Grid field file; otherwise `--field` or the unit monopole.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    /// Allowed extrapolated distance as a fraction of the largest one.
    #[arg(long, default_value_t = 0.25)]
    tol: f64,
    /// Write `(ρ, d)` plot data.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AuditAllArgs {
    /// Recorded only; each criterion fixes its own mesh level.
    #[arg(long, default_value_t = 3)]
    level: u32,
    /// Recorded only; each criterion fixes its own exponent.
    #[arg(long, default_value_t = 1.25)]
    p: f64,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wbundle: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Res<()> {
    if let Ok(s) = std::env::var(THREADS_ENV) {
        let n: usize = s.parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV}={s} is not a count")))?;
        // a second initialization only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = serde_json::to_value(cli)?;
    let mut inputs = Vec::new();
    let (result, failures) = dispatch(&cli.command, &mut inputs)?;
    let hash = content_hash(&config, &inputs)?;
    emit(&report(&config, &hash, result, cli.timing)?, cli.out.as_deref())?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Audit(failures))
    }
}

fn failures_of(r: &AuditReport) -> Vec<String> {
    r.failures().iter().map(|c| format!("{} = {:.4e} (bound {:.4e})", c.name, c.value, c.bound)).collect()
}

fn check_p(p: f64, lo: f64, hi: f64, hi_open: bool, what: &str) -> Res<()> {
    let ok = p > lo && if hi_open { p < hi } else { p <= hi };
    if ok {
        Ok(())
    } else {
        let close = if hi_open { ')' } else { ']' };
        Err(CliError::Usage(format!("{what} needs p in ({lo}, {hi}{close}, got {p}")))
    }
}

fn positive(v: f64, name: &str) -> Res<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be positive, got {v}")))
    }
}

fn mesh(level: u32) -> Res<Arc<SphereMesh>> {
    Ok(Arc::new(SphereMesh::icosphere(level)?))
}

/// A point given as `x,y,z`.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(transparent)]
struct Point([f64; 3]);

impl std::str::FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        match v[..] {
            [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Self([x, y, z])),
            _ => Err(format!("expected three finite numbers x,y,z, got {s}")),
        }
    }
}

fn vec3(p: &Point) -> Vec3 {
    Vec3::from(p.0)
}

fn load_field(arg: &FieldArg, inputs: &mut Vec<PathBuf>) -> Res<AnalyticField> {
    match &arg.field {
        Some(p) => {
            inputs.push(p.clone());
            let s = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.clone(), e))?;
            Ok(AnalyticField::from_json(&s)?)
        }
        None => Ok(AnalyticField::monopole(Vec3::zeros(), 1)?),
    }
}

fn load_cochain(m: &Arc<SphereMesh>, path: &Path, inputs: &mut Vec<PathBuf>) -> Res<TwoCochain> {
    if !path.exists() {
        return Err(CliError::Io(path.to_path_buf(), std::io::ErrorKind::NotFound.into()));
    }
    inputs.push(path.to_path_buf());
    Ok(TwoCochain::load(m.clone(), path)?)
}

fn boundary(arg: &BoundaryArg, inputs: &mut Vec<PathBuf>) -> Res<(BoundaryData, Arc<SphereMesh>)> {
    let m = mesh(arg.phi_level)?;
    let data = match arg.phi.as_str() {
        "two-lobe" => BoundaryData::TwoLobe,
        s if s.starts_with("constant:") => {
            let k: f64 = s["constant:".len()..]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad boundary preset {s}")))?;
            BoundaryData::Constant(k)
        }
        path => BoundaryData::Sampled(load_cochain(&m, Path::new(path), inputs)?),
    };
    Ok((data, m))
}

type Outcome = (Value, Vec<String>);

fn dispatch(cmd: &Command, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    match cmd {
        Command::Mesh(a) => cmd_mesh(a),
        Command::Dist(a) => cmd_dist(a, inputs),
        Command::Flux(a) => cmd_flux(a, inputs),
        Command::Slice(a) => cmd_slice(a, inputs),
        Command::Holder(a) => cmd_holder(a, inputs),
        Command::Energy(a) => cmd_energy(a, inputs),
        Command::Monotonicity(a) => cmd_monotonicity(a, inputs),
        Command::Blowup(a) => cmd_blowup(a),
        Command::Metrize(a) => cmd_metrize(a),
        Command::Plateau(a) => cmd_plateau(a, inputs),
        Command::Trace(a) => cmd_trace(a, inputs),
        Command::AuditAll(a) => cmd_audit_all(a),
    }
}

fn cmd_mesh(a: &MeshArgs) -> Res<Outcome> {
    let m = mesh(a.level)?;
    if let Some(p) = &a.off {
        m.save_off(p)?;
    }
    let mut degree = None;
    if let Some(p) = &a.random {
        let c = random_smooth(&m, a.degree, a.bumps, &mut ChaCha8Rng::seed_from_u64(a.seed));
        c.save(p, None)?;
        degree = Some(c.degree());
    }
    let result = json!({
        "level": m.level(),
        "faces": m.n_faces(),
        "edges": m.n_edges(),
        "vertices": m.vertices().len(),
        "euler_characteristic": m.euler_characteristic(),
        "total_area": m.total_area(),
        "mean_edge_length": m.mean_edge_length(),
        "mesh_hash": m.hash(),
        "random_cochain_degree": degree,
    });
    Ok((result, Vec::new()))
}

fn cmd_dist(a: &DistArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    check_p(a.p, 1.0, 2.0, true, "dist")?;
    positive(a.tol, "tol")?;
    let m = mesh(a.level)?;
    let h1 = load_cochain(&m, &a.h1, inputs)?;
    let h2 = load_cochain(&m, &a.h2, inputs)?;
    let opts = DistanceOptions { tol: a.tol, restarts: a.restarts, seed: a.seed, ..Default::default() };
    let r = slice_distance(&h1, &h2, a.p, &opts)?;
    Ok((r.summary(), Vec::new()))
}

fn cmd_flux(a: &SphereArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    positive(a.r, "r")?;
    let f = load_field(&a.field, inputs)?;
    let m = mesh(a.level)?;
    let x = vec3(&a.center);
    let flux = f.flux(&x, a.r, &m)?;
    let enclosed = f.enclosed_charge(&x, a.r);
    let result = json!({ "flux": flux, "enclosed_charge": enclosed, "error": (flux - enclosed).abs() });
    Ok((result, Vec::new()))
}

fn cmd_slice(a: &SliceArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    let s = &a.sphere;
    positive(s.r, "r")?;
    let f = load_field(&s.field, inputs)?;
    let m = mesh(s.level)?;
    let c = f.slice(&vec3(&s.center), s.r, &m)?;
    c.save(&a.csv, None)?;
    let result = json!({ "csv": a.csv, "degree": c.degree(), "faces": m.n_faces(), "mesh_hash": m.hash() });
    Ok((result, Vec::new()))
}

fn cmd_holder(a: &HolderArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    check_p(a.p, 1.0, 2.0, true, "holder")?;
    positive(a.min_radius, "min-radius")?;
    let f = load_field(&a.field, inputs)?;
    let cfg = HolderConfig {
        n_pairs: a.pairs,
        p: a.p,
        seed: a.seed,
        mesh_level: a.level,
        min_radius: a.min_radius,
        check_segments: !a.no_segments,
        ..Default::default()
    };
    let (rep, pairs) = holder_audit(&f, &cfg)?;
    let failures = failures_of(&rep);
    Ok((json!({ "audit": rep, "pairs": pairs }), failures))
}

fn cmd_energy(a: &EnergyArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    check_p(a.p, 1.0, 1.5, false, "energy")?;
    positive(a.radius, "radius")?;
    let f = load_field(&a.field, inputs)?;
    let ball = Ball::new(vec3(&a.center), a.radius);
    let energy = lp_energy(&f, &ball, a.p)?;
    let mut result = json!({ "energy": energy });
    if f.smooth.is_empty() && f.charges.len() == 1 {
        let c = &f.charges[0];
        let dist = (c.center() - ball.center()).norm();
        result["closed_form"] = json!(monopole_ball_energy(c.charge, dist, a.radius, a.p));
    }
    if let Some(n) = a.grid {
        if n == 0 {
            return Err(CliError::Usage("--grid must be positive".into()));
        }
        // odd cell count puts a centered charge at a cell center
        let h = 2.0 * a.radius / (n as f64 - 1.0).max(1.0);
        let o = ball.center() - Vec3::repeat(n as f64 * h / 2.0);
        let g = GridField::rasterize(&f, [n; 3], h, o)?;
        result["grid_energy"] = json!(g.lp_energy(&ball, a.p)?);
    }
    Ok((result, Vec::new()))
}

fn cmd_monotonicity(a: &MonotonicityArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    check_p(a.p, 1.0, 1.5, false, "monotonicity")?;
    positive(a.rmin, "rmin")?;
    if a.rmax.is_nan() || a.rmax <= a.rmin || a.radii < 2 {
        return Err(CliError::Usage("need rmin < rmax and at least two radii".into()));
    }
    let f = load_field(&a.field, inputs)?;
    let x = vec3(&a.center);
    let radii: Vec<f64> =
        (0..a.radii).map(|i| a.rmin * (a.rmax / a.rmin).powf(i as f64 / (a.radii - 1) as f64)).collect();
    let audit = monotonicity_audit(&f, &x, &radii, a.p)?;
    let profile = rescaled_energy_profile(&f, &x, &radii, a.p)?;
    if let Some(path) = &a.plot {
        let rows: Vec<(f64, f64)> = profile.rows.iter().map(|r| (r.r, r.rescaled)).collect();
        emit_plot_data(path, ["r", "E_rescaled"], &rows, json!({ "p": a.p, "center": a.center }))?;
    }
    let failures = failures_of(&audit);
    Ok((json!({ "audit": audit, "profile": profile, "rescaled_spread": profile.rescaled_spread() }), failures))
}

fn cmd_blowup(a: &BlowupArgs) -> Res<Outcome> {
    check_p(a.p, 1.0, 1.5, true, "blowup")?;
    let m = mesh(a.level)?;
    let rho: Vec<f64> = (0..9).map(|i| 0.01 * 10f64.powf(i as f64 / 8.0)).collect();
    let fit = blowup_experiment(a.p, &rho, &m)?;
    if let Some(path) = &a.plot {
        let rows: Vec<(f64, f64)> = fit.points.iter().map(|(r, v)| (r.ln(), v.ln())).collect();
        let meta = json!({ "p": a.p, "slope": fit.slope, "expected": fit.expected });
        emit_plot_data(path, ["log_rho", "log_cap_power"], &rows, meta)?;
    }
    Ok((serde_json::to_value(&fit)?, Vec::new()))
}

fn cmd_metrize(a: &MetrizeArgs) -> Res<Outcome> {
    check_p(a.p, 1.0, 2.0, true, "metrize")?;
    let m = mesh(a.level)?;
    let h = integrate_faces(&m, |x| (1.0 + 0.5 * x.x) / (4.0 * std::f64::consts::PI));
    let opts = DistanceOptions { restarts: 0, seed: a.seed, ..Default::default() };
    let tab = metrization_experiment(&h, &a.bands, a.p, a.amplitude_exponent, &opts)?;
    let failures = failures_of(&tab.report);
    Ok((serde_json::to_value(&tab)?, failures))
}

fn cmd_plateau(a: &PlateauArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    check_p(a.p, 1.0, 1.5, false, "plateau")?;
    positive(a.tol, "tol")?;
    let (data, m) = boundary(&a.boundary, inputs)?;
    let opts = PlateauOptions { tol: a.tol, restarts: a.restarts, seed: a.seed, ..Default::default() };
    let res = outer_search(&data, a.p, a.n, &opts)?;
    if let Some(p) = &a.grid_out {
        res.field.save(p)?;
    }
    let mut summary = res.summary();
    if a.check_trace {
        let phi = data.to_cochain(&m)?;
        let t = trace_profile(&res.field, &phi, &TRACE_RHO, &TraceOptions { p: a.p, ..Default::default() })?;
        summary["trace"] = serde_json::to_value(&t)?;
    }
    Ok((summary, Vec::new()))
}

fn cmd_trace(a: &TraceArgs, inputs: &mut Vec<PathBuf>) -> Res<Outcome> {
    check_p(a.p, 1.0, 2.0, true, "trace")?;
    positive(a.tol, "tol")?;
    let (data, m) = boundary(&a.boundary, inputs)?;
    let phi = data.to_cochain(&m)?;
    let field: Box<dyn VectorField> = match &a.grid {
        Some(p) => {
            inputs.push(p.clone());
            Box::new(GridField::load(p)?)
        }
        None => Box::new(load_field(&a.field, inputs)?),
    };
    let opts = TraceOptions { p: a.p, extrapolation_tol: a.tol, ..Default::default() };
    let t = trace_profile(field.as_ref(), &phi, &TRACE_RHO, &opts)?;
    if let Some(path) = &a.plot {
        let rows: Vec<(f64, f64)> = t.rho.iter().copied().zip(t.distances.iter().copied()).collect();
        emit_plot_data(path, ["rho", "d"], &rows, json!({ "member": t.member, "boundary": data.label() }))?;
    }
    Ok((serde_json::to_value(&t)?, Vec::new()))
}

fn cmd_audit_all(a: &AuditAllArgs) -> Res<Outcome> {
    let outcomes = if a.only.is_empty() {
        wbundle::suite::run_all(|o| eprintln!("{}", o.line()))
    } else {
        let mut v = Vec::new();
        for &id in &a.only {
            let o = wbundle::suite::criterion(id).ok_or_else(|| CliError::Usage(format!("no criterion {id}")))?;
            eprintln!("{}", o.line());
            v.push(o);
        }
        v
    };
    let failures: Vec<String> = outcomes
        .iter()
        .flat_map(|o| failures_of(&o.report).into_iter().map(move |f| format!("criterion {}: {f}", o.id)))
        .collect();
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    Ok((json!({ "passed": passed, "total": outcomes.len(), "criteria": outcomes }), failures))
}
