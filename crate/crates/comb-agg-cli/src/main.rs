//! `agg`: command-line driver for the aggregation models. Three verbs:
//! `sim` runs a model and dumps its cluster (CSV by default, plus odometer
//! and field dumps next to `--out`), `verify` re-checks a library invariant
//! and prints a JSON report for CI to gate on, `render` draws a cluster CSV
//! as unit squares in an SVG.
//!
//! Exit codes: 0 success (for `verify`: the check passed), 1 runtime or
//! solver failure (or a failed check), 2 configuration errors. Set AGG_LOG
//! to error/warn/info/debug for progress lines on stderr.

use clap::{Args, Parser, Subcommand, ValueEnum};
use comb_agg::idla::{containment_fraction, idla_run, IdlaError};
use comb_agg::lattice::{comb_distance, degree, region_boundary, CsvError};
use comb_agg::potential::{
    green_series_coeffs, interval_green, return_prob_dp, stopped_green, PotentialError,
};
use comb_agg::rotor::{
    check_rotor_bound, line_regular_check, read_rotor_csv, rotor_aggregate, rotor_inner_region,
    RotorError, RotorPreset, RotorRun, RotorState,
};
use comb_agg::sandpile::{
    abelian_check, relax_point_mass, MassField, RelaxOptions, SandpileError, Schedule,
};
use comb_agg::shape::{ball_region, ShapeError, ShapeSpec, K, L};
use comb_agg::{GraphKind, Region, Vertex};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

// ---------------------------------------------------------------------------
// logging (AGG_LOG=error|warn|info|debug, off when unset)

fn log_level() -> u8 {
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("AGG_LOG").ok().as_deref() {
        None | Some("") | Some("off") => 0,
        Some("error") => 1,
        Some("warn") => 2,
        Some("info") => 3,
        Some("debug") => 4,
        Some(other) => {
            eprintln!("agg: unknown AGG_LOG level `{other}`, logging stays off");
            0
        }
    })
}

macro_rules! log_at {
    ($lvl:expr, $tag:literal, $($arg:tt)*) => {
        if log_level() >= $lvl {
            eprintln!(concat!("agg [", $tag, "] {}"), format_args!($($arg)*));
        }
    };
}
macro_rules! info {
    ($($arg:tt)*) => { log_at!(3, "info", $($arg)*) };
}
macro_rules! debug {
    ($($arg:tt)*) => { log_at!(4, "debug", $($arg)*) };
}

// ---------------------------------------------------------------------------
// failure plumbing: every error knows which exit code it deserves

/// Exit code 1: the run itself failed (solver stuck, cap exceeded, output
/// unwritable). Exit code 2: the invocation was wrong to begin with.
#[derive(Debug, PartialEq)]
struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn run_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

impl From<SandpileError> for Failure {
    fn from(e: SandpileError) -> Failure {
        match e {
            SandpileError::InvalidTolerance { .. } => config_error(e.to_string()),
            _ => run_error(e.to_string()),
        }
    }
}

impl From<IdlaError> for Failure {
    fn from(e: IdlaError) -> Failure {
        match e {
            IdlaError::StepCapExceeded { .. } => run_error(e.to_string()),
            _ => config_error(e.to_string()),
        }
    }
}

impl From<RotorError> for Failure {
    fn from(e: RotorError) -> Failure {
        match e {
            RotorError::StepCapExceeded { .. } | RotorError::FlowSolverStuck { .. } => {
                run_error(e.to_string())
            }
            RotorError::Potential(inner) => inner.into(),
            RotorError::Sandpile(inner) => inner.into(),
            RotorError::Shape(inner) => inner.into(),
            _ => config_error(e.to_string()),
        }
    }
}

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Failure {
        match e {
            PotentialError::ResidualTooLarge { .. }
            | PotentialError::NotCombConvex { .. }
            | PotentialError::RatioUndefined { .. } => run_error(e.to_string()),
            _ => config_error(e.to_string()),
        }
    }
}

impl From<ShapeError> for Failure {
    fn from(e: ShapeError) -> Failure {
        config_error(e.to_string())
    }
}

impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Failure {
        config_error(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// argument surface

#[derive(Parser)]
#[command(
    name = "agg",
    version,
    about = "Aggregation models on the comb lattice: simulate, verify, render"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model and write its cluster (plus odometer/field dumps with --out).
    #[command(subcommand)]
    Sim(SimCmd),
    /// Re-run a library check and print a JSON report; exit 0 iff it passes.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Draw a cluster CSV as SVG unit squares, optionally with the predicted ball outline.
    Render(RenderArgs),
}

#[derive(Subcommand)]
enum SimCmd {
    /// Divisible sandpile: mass n at the origin, relaxed to its limit.
    Sandpile(SandpileArgs),
    /// Random-walk aggregation with n particles (seeded, replayable).
    Idla(IdlaArgs),
    /// Rotor-router aggregation with n particles (deterministic).
    Rotor(RotorArgs),
}

#[derive(Args)]
struct SandpileArgs {
    /// Total mass released at the origin.
    #[arg(long)]
    n: f64,
    /// Stop once total excess falls below this.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Args)]
struct IdlaArgs {
    /// Number of particles.
    #[arg(long)]
    n: u64,
    /// Master seed; each particle walks on its own substream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent runs at seeds seed, seed+1, ...; needs --out when above 1.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Worker threads for --trials.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Args)]
struct RotorArgs {
    /// Number of particles.
    #[arg(long)]
    n: u64,
    /// Initial rotors: all-first, toward-origin, or file:PATH (x,y,index rows).
    #[arg(long, default_value = "all-first")]
    rotors: String,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    /// Cluster output path; stdout when omitted (metadata then goes to stderr).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cluster encoding; csv round-trips through the readers.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Sandpile cluster against the predicted ball: boundary layer, extents, tooth height.
    Shape(ShapeVerifyArgs),
    /// Two toppling schedules from the same start agree on the odometer.
    Abelian(AbelianArgs),
    /// Random-walk clusters cover the shrunken ball in all but at most one trial.
    IdlaInner(IdlaInnerArgs),
    /// Rotor odometer stays above the sandpile odometer minus the tree weight.
    RotorBound(RotorBoundArgs),
    /// The provable rotor inner region sits inside every preset's cluster.
    RotorRegion(RotorRegionArgs),
    /// On the line, the mass-n/3 sandpile cluster sits inside the n-rotor cluster.
    LineRegular(LineRegularArgs),
    /// Return-probability series at the origin against exact dynamics.
    Kernel(KernelArgs),
    /// Stopped Green function: exact two-site values, reversibility, interval formula.
    GreenConsistency(GreenArgs),
}

#[derive(Args)]
struct ShapeVerifyArgs {
    /// Total sandpile mass.
    #[arg(long, default_value_t = 1000.0)]
    n: f64,
    /// Relaxation stop tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct AbelianArgs {
    /// Total sandpile mass.
    #[arg(long, default_value_t = 1000.0)]
    n: f64,
    /// Relaxation stop tolerance for both schedules.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct IdlaInnerArgs {
    /// Number of particles per run.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    /// Shrink factor: the target ball has mass n(1 - eps).
    #[arg(long, default_value_t = 0.15)]
    eps: f64,
    /// Independent runs at seeds seed, seed+1, ...
    #[arg(long, default_value_t = 20)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RotorBoundArgs {
    /// Number of particles (and sandpile mass).
    #[arg(long, default_value_t = 500)]
    n: u64,
    /// Allowed slack below zero.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Check a single preset instead of the built-in three.
    #[arg(long)]
    rotors: Option<String>,
}

#[derive(Args)]
struct RotorRegionArgs {
    /// Number of particles.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    /// Check a single preset instead of the built-in three.
    #[arg(long)]
    rotors: Option<String>,
}

#[derive(Args)]
struct LineRegularArgs {
    /// Number of rotor particles; the sandpile gets mass n/3.
    #[arg(long, default_value_t = 999)]
    n: u64,
}

#[derive(Args)]
struct KernelArgs {
    /// Compare series coefficients for all t up to this.
    #[arg(long, default_value_t = 40)]
    tmax: usize,
    /// Largest allowed coefficient error.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct GreenArgs {
    /// Mass of the ball used for the reversibility sample.
    #[arg(long, default_value_t = 500.0)]
    n: f64,
}

#[derive(Args)]
struct RenderArgs {
    /// Cluster CSV file (header `x,y`).
    input: PathBuf,
    /// Analytic outline overlay, written ball:N with N the ball mass.
    #[arg(long)]
    overlay: Option<String>,
    /// SVG output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("agg: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Sim(cmd) => cmd_sim(cmd),
        Command::Verify(cmd) => cmd_verify(cmd),
        Command::Render(args) => cmd_render(args),
    }
}

// ---------------------------------------------------------------------------
// sim

fn cmd_sim(cmd: SimCmd) -> Result<ExitCode, Failure> {
    match cmd {
        SimCmd::Sandpile(args) => sim_sandpile(args),
        SimCmd::Idla(args) => sim_idla(args),
        SimCmd::Rotor(args) => sim_rotor(args),
    }
}

fn sim_sandpile(args: SandpileArgs) -> Result<ExitCode, Failure> {
    let t0 = Instant::now();
    let opts = RelaxOptions {
        stop_tol: args.tol,
        ..RelaxOptions::default()
    };
    let result = relax_point_mass(GraphKind::Comb2, args.n, &opts)?;
    info!(
        "sandpile n = {} settled on {} sites, residual {:.3e}",
        args.n,
        result.cluster.len(),
        result.residual_excess
    );
    let mut meta = json!({
        "model": "sandpile",
        "n": args.n,
        "seed": null,
        "cluster_size": result.cluster.len(),
        "extents": extents_json(&result.cluster),
        "iterations": result.iterations,
        "residual_excess": result.residual_excess,
    });
    if let Some(out) = &args.io.out {
        write_region_file(out, &result.cluster, args.io.format)?;
        let odometer = out.with_extension("odometer.csv");
        write_to(&odometer, |w| result.odometer.write_csv(w))?;
        let mass = out.with_extension("mass.csv");
        write_to(&mass, |w| result.mass.write_csv(w))?;
        meta["cluster_file"] = json!(out.display().to_string());
        meta["odometer_file"] = json!(odometer.display().to_string());
        meta["mass_file"] = json!(mass.display().to_string());
    } else {
        write_region_stdout(&result.cluster, args.io.format)?;
    }
    meta["wall_time_s"] = json!(t0.elapsed().as_secs_f64());
    emit_metadata(&meta, args.io.out.is_none());
    Ok(ExitCode::SUCCESS)
}

fn sim_idla(args: IdlaArgs) -> Result<ExitCode, Failure> {
    if args.trials == 0 {
        return Err(config_error("--trials must be at least 1"));
    }
    if args.jobs == 0 {
        return Err(config_error("--jobs must be at least 1"));
    }
    if args.trials > 1 && args.io.out.is_none() {
        return Err(config_error(
            "--trials above 1 needs --out to derive per-seed file names",
        ));
    }
    let seeds: Vec<u64> = (0..args.trials).map(|i| args.seed + i).collect();
    let n = args.n;
    let runs = run_trials(&seeds, args.jobs, |seed| {
        let t0 = Instant::now();
        let run = idla_run(n, seed)?;
        Ok((run, t0.elapsed().as_secs_f64()))
    })?;
    let mut reports = Vec::with_capacity(runs.len());
    for (seed, (run, secs)) in &runs {
        let path = args.io.out.as_ref().map(|p| {
            if args.trials == 1 {
                p.clone()
            } else {
                seeded_path(p, *seed)
            }
        });
        if let Some(p) = &path {
            write_region_file(p, &run.cluster, args.io.format)?;
        }
        info!("idla n = {n} seed {seed}: {} sites", run.cluster.len());
        reports.push(json!({
            "model": "idla",
            "n": n,
            "seed": seed,
            "wall_time_s": secs,
            "cluster_size": run.cluster.len(),
            "extents": extents_json(&run.cluster),
            "total_steps": run.steps.iter().sum::<u64>(),
            "cluster_file": path.as_ref().map(|p| p.display().to_string()),
        }));
    }
    if args.trials == 1 {
        if args.io.out.is_none() {
            let (_, (run, _)) = &runs[0];
            write_region_stdout(&run.cluster, args.io.format)?;
        }
        emit_metadata(&reports[0], args.io.out.is_none());
    } else {
        emit_metadata(&Value::Array(reports), false);
    }
    Ok(ExitCode::SUCCESS)
}

fn sim_rotor(args: RotorArgs) -> Result<ExitCode, Failure> {
    let t0 = Instant::now();
    let preset = parse_preset(&args.rotors)?;
    let run = rotor_aggregate(args.n, &RotorState::new(GraphKind::Comb2, preset))?;
    info!(
        "rotor n = {} settled after {} emissions",
        args.n,
        run.total_emissions()
    );
    let mut meta = json!({
        "model": "rotor",
        "n": args.n,
        "seed": null,
        "rotors": args.rotors,
        "cluster_size": run.cluster.len(),
        "extents": extents_json(&run.cluster),
        "total_emissions": run.total_emissions(),
    });
    if let Some(out) = &args.io.out {
        write_region_file(out, &run.cluster, args.io.format)?;
        let odometer = out.with_extension("odometer.csv");
        write_to(&odometer, |w| write_emission_csv(w, &run))?;
        let rotors = out.with_extension("rotors.csv");
        write_to(&rotors, |w| run.rotors.write_csv(w))?;
        meta["cluster_file"] = json!(out.display().to_string());
        meta["odometer_file"] = json!(odometer.display().to_string());
        meta["rotor_file"] = json!(rotors.display().to_string());
    } else {
        write_region_stdout(&run.cluster, args.io.format)?;
    }
    meta["wall_time_s"] = json!(t0.elapsed().as_secs_f64());
    emit_metadata(&meta, args.io.out.is_none());
    Ok(ExitCode::SUCCESS)
}

/// Integer odometer dump: `x,y,emissions`, sorted like the other CSVs.
fn write_emission_csv<W: Write>(mut out: W, run: &RotorRun) -> io::Result<()> {
    let mut rows: Vec<(Vertex, u64)> = run.odometer.iter().map(|(&v, &m)| (v, m)).collect();
    rows.sort_unstable();
    out.write_all(b"x,y,emissions\n")?;
    for (v, m) in rows {
        writeln!(out, "{},{},{}", v.x, v.y, m)?;
    }
    Ok(())
}

fn parse_preset(s: &str) -> Result<RotorPreset, Failure> {
    match s {
        "all-first" => Ok(RotorPreset::AllFirst),
        "toward-origin" => Ok(RotorPreset::TowardOrigin),
        _ => {
            let Some(path) = s.strip_prefix("file:") else {
                return Err(config_error(format!(
                    "--rotors takes all-first, toward-origin or file:PATH, got `{s}`"
                )));
            };
            let file = File::open(path)
                .map_err(|e| config_error(format!("cannot open rotor file {path}: {e}")))?;
            let map = read_rotor_csv(BufReader::new(file))
                .map_err(|e| config_error(format!("rotor file {path}: {e}")))?;
            Ok(RotorPreset::Custom(map))
        }
    }
}

/// The preset trio the verify defaults sweep: the two named families plus a
/// fixed aperiodic custom map, so no check leans on a symmetric start.
fn preset_trio() -> Vec<(String, RotorPreset)> {
    vec![
        ("all-first".into(), RotorPreset::AllFirst),
        ("toward-origin".into(), RotorPreset::TowardOrigin),
        ("mixed".into(), mixed_preset()),
    ]
}

fn mixed_preset() -> RotorPreset {
    let mut map = HashMap::new();
    for x in -64..=64i64 {
        for y in -64..=64i64 {
            map.insert(Vertex::new(x, y), (x * 7 + y * 13).rem_euclid(4) as u8);
        }
    }
    RotorPreset::Custom(map)
}

fn named_or_trio(rotors: &Option<String>) -> Result<Vec<(String, RotorPreset)>, Failure> {
    match rotors {
        Some(s) => Ok(vec![(s.clone(), parse_preset(s)?)]),
        None => Ok(preset_trio()),
    }
}

// ---------------------------------------------------------------------------
// verify

fn cmd_verify(cmd: VerifyCmd) -> Result<ExitCode, Failure> {
    let t0 = Instant::now();
    let (mut report, pass) = match cmd {
        VerifyCmd::Shape(a) => verify_shape(a)?,
        VerifyCmd::Abelian(a) => verify_abelian(a)?,
        VerifyCmd::IdlaInner(a) => verify_idla_inner(a)?,
        VerifyCmd::RotorBound(a) => verify_rotor_bound(a)?,
        VerifyCmd::RotorRegion(a) => verify_rotor_region(a)?,
        VerifyCmd::LineRegular(a) => verify_line_regular(a)?,
        VerifyCmd::Kernel(a) => verify_kernel(a)?,
        VerifyCmd::GreenConsistency(a) => verify_green_consistency(a)?,
    };
    report["pass"] = json!(pass);
    report["wall_time_s"] = json!(t0.elapsed().as_secs_f64());
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    info!(
        "verify {}: {}",
        report["check"],
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn verify_shape(args: ShapeVerifyArgs) -> Result<(Value, bool), Failure> {
    let opts = RelaxOptions {
        stop_tol: args.tol,
        ..RelaxOptions::default()
    };
    let sand = relax_point_mass(GraphKind::Comb2, args.n, &opts)?;
    let ball = ball_region(args.n);
    let (outer, inner) = region_boundary(&ball);
    let boundary: Vec<Vertex> = outer.iter().chain(inner.iter()).collect();
    let sym: Vec<Vertex> = sand
        .cluster
        .iter()
        .filter(|&v| !ball.contains(v))
        .chain(ball.iter().filter(|&v| !sand.cluster.contains(v)))
        .collect();
    let layer = sym
        .iter()
        .map(|&v| {
            boundary
                .iter()
                .map(|&b| comb_distance(v, b))
                .min()
                .unwrap_or(u64::MAX)
        })
        .max()
        .unwrap_or(0);
    let max_x = sand.cluster.iter().map(|v| v.x).max().unwrap_or(0);
    let x_extent_error = (max_x as f64 - K * args.n.cbrt()).abs();
    let spec = ShapeSpec::for_mass(args.n)?;
    let height = sand
        .cluster
        .iter()
        .filter(|v| v.x == 0)
        .map(|v| v.y)
        .max()
        .unwrap_or(0);
    let tooth_height_error = (height as f64 - spec.mass_profile(0) / 2.0).abs();
    let pass = layer <= 6 && x_extent_error <= 3.0 && tooth_height_error <= 3.0;
    Ok((
        json!({
            "check": "shape",
            "n": args.n,
            "cluster_size": sand.cluster.len(),
            "sym_diff_size": sym.len(),
            "boundary_layer_width": layer,
            "x_extent_error": x_extent_error,
            "tooth_height_error": tooth_height_error,
        }),
        pass,
    ))
}

fn verify_abelian(args: AbelianArgs) -> Result<(Value, bool), Failure> {
    let mu0 = MassField::point(GraphKind::Comb2, Vertex::ORIGIN, args.n);
    let sup = abelian_check(&mu0, Schedule::SweepBox, Schedule::UnstableQueue, args.tol)?;
    let pass = sup <= 1e-6;
    Ok((
        json!({
            "check": "abelian",
            "n": args.n,
            "stop_tol": args.tol,
            "sup_odometer_diff": sup,
            "threshold": 1e-6,
        }),
        pass,
    ))
}

fn verify_idla_inner(args: IdlaInnerArgs) -> Result<(Value, bool), Failure> {
    if args.trials == 0 {
        return Err(config_error("--trials must be at least 1"));
    }
    if args.jobs == 0 {
        return Err(config_error("--jobs must be at least 1"));
    }
    let seeds: Vec<u64> = (0..args.trials).map(|i| args.seed + i).collect();
    let (n, eps) = (args.n, args.eps);
    let rows = run_trials(&seeds, args.jobs, |seed| {
        let run = idla_run(n, seed)?;
        Ok(containment_fraction(&run, eps)?)
    })?;
    let contained = rows.iter().filter(|(_, f)| *f == 1.0).count() as u64;
    // one bad seed is tolerated, matching the probabilistic guarantee
    let required = (args.trials - 1).max(1);
    let pass = contained >= required;
    let per_seed: Vec<Value> = rows
        .iter()
        .map(|(seed, fraction)| {
            json!({"seed": seed, "covered_fraction": fraction, "contained": *fraction == 1.0})
        })
        .collect();
    Ok((
        json!({
            "check": "idla-inner",
            "n": n,
            "eps": eps,
            "trials": args.trials,
            "contained": contained,
            "required": required,
            "per_seed": per_seed,
        }),
        pass,
    ))
}

fn verify_rotor_bound(args: RotorBoundArgs) -> Result<(Value, bool), Failure> {
    let mut rows = Vec::new();
    let mut pass = true;
    for (name, preset) in named_or_trio(&args.rotors)? {
        let state = RotorState::new(GraphKind::Comb2, preset);
        let slack = check_rotor_bound(args.n, &state, 1e-8)?;
        debug!("rotor-bound {name}: min slack {slack:.3e}");
        pass &= slack >= -args.tol;
        rows.push(json!({"preset": name, "min_slack": slack}));
    }
    Ok((
        json!({
            "check": "rotor-bound",
            "n": args.n,
            "slack_tolerance": args.tol,
            "presets": rows,
        }),
        pass,
    ))
}

fn verify_rotor_region(args: RotorRegionArgs) -> Result<(Value, bool), Failure> {
    let region = rotor_inner_region(args.n as f64)?;
    let mut rows = Vec::new();
    let mut pass = true;
    for (name, preset) in named_or_trio(&args.rotors)? {
        let run = rotor_aggregate(args.n, &RotorState::new(GraphKind::Comb2, preset))?;
        let contained = region.iter().all(|v| run.cluster.contains(v));
        debug!("rotor-region {name}: contained = {contained}");
        pass &= contained;
        rows.push(json!({
            "preset": name,
            "contained": contained,
            "cluster_size": run.cluster.len(),
        }));
    }
    Ok((
        json!({
            "check": "rotor-region",
            "n": args.n,
            "region_size": region.len(),
            "presets": rows,
        }),
        pass,
    ))
}

fn verify_line_regular(args: LineRegularArgs) -> Result<(Value, bool), Failure> {
    let mut rows = Vec::new();
    let mut pass = true;
    for (name, preset) in [
        ("all-first", RotorPreset::AllFirst),
        ("toward-origin", RotorPreset::TowardOrigin),
    ] {
        let contained = line_regular_check(args.n, &preset)?;
        pass &= contained;
        rows.push(json!({"preset": name, "contained": contained}));
    }
    Ok((
        json!({
            "check": "line-regular",
            "n": args.n,
            "sandpile_mass": args.n / 3,
            "presets": rows,
        }),
        pass,
    ))
}

fn verify_kernel(args: KernelArgs) -> Result<(Value, bool), Failure> {
    let series = green_series_coeffs(args.tmax);
    let dp = return_prob_dp(args.tmax)?;
    let max_err = series
        .iter()
        .zip(&dp)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let pass = max_err <= args.tol;
    Ok((
        json!({
            "check": "kernel",
            "t_max": args.tmax,
            "max_coefficient_error": max_err,
            "tolerance": args.tol,
        }),
        pass,
    ))
}

fn verify_green_consistency(args: GreenArgs) -> Result<(Value, bool), Failure> {
    // exact values on the two-site region
    let pair = Region::from_vertices(GraphKind::Comb2, [Vertex::ORIGIN, Vertex::new(0, 1)]);
    let g = stopped_green(&pair, Vertex::ORIGIN)?;
    let two_site_err = (g.get(Vertex::ORIGIN) - 8.0 / 7.0)
        .abs()
        .max((g.get(Vertex::new(0, 1)) - 2.0 / 7.0).abs());
    // reversibility G(y,z)/d(z) = G(z,y)/d(y) across a spread sample
    let ball = ball_region(args.n);
    let verts = ball.sorted_vertices();
    let picks: Vec<Vertex> = (0..8).map(|i| verts[i * (verts.len() - 1) / 7]).collect();
    let fields = picks
        .iter()
        .map(|&y| stopped_green(&ball, y))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reversibility_err = 0.0f64;
    for i in 0..picks.len() {
        for j in i + 1..picks.len() {
            let lhs = fields[i].get(picks[j]) / degree(picks[j], GraphKind::Comb2) as f64;
            let rhs = fields[j].get(picks[i]) / degree(picks[i], GraphKind::Comb2) as f64;
            reversibility_err = reversibility_err.max((lhs - rhs).abs());
        }
    }
    // closed interval formula against the line solver, every start point
    let mut interval_err = 0.0f64;
    for b in [1i64, 10, 100] {
        let interval =
            Region::from_vertices(GraphKind::Line, (-b..=b).map(|x| Vertex::new(x, 0)));
        for y in -b..=b {
            let gf = stopped_green(&interval, Vertex::new(y, 0))?;
            interval_err =
                interval_err.max((gf.get(Vertex::new(y, 0)) - interval_green(b, y)?).abs());
        }
    }
    let pass = two_site_err <= 1e-10 && reversibility_err <= 1e-9 && interval_err <= 1e-10;
    Ok((
        json!({
            "check": "green-consistency",
            "n": args.n,
            "two_site_max_err": two_site_err,
            "reversibility_max_err": reversibility_err,
            "interval_max_err": interval_err,
        }),
        pass,
    ))
}

// ---------------------------------------------------------------------------
// render

const OUTLINE_SAMPLES: usize = 256;

fn cmd_render(args: RenderArgs) -> Result<ExitCode, Failure> {
    let overlay = args.overlay.as_deref().map(parse_overlay).transpose()?;
    let file = File::open(&args.input)
        .map_err(|e| config_error(format!("cannot open {}: {e}", args.input.display())))?;
    let region = Region::read_csv(GraphKind::Comb2, BufReader::new(file))?;
    let svg = render_svg(&region, overlay);
    match &args.out {
        Some(path) => std::fs::write(path, svg.as_bytes())
            .map_err(|e| run_error(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(svg.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| run_error(format!("writing stdout: {e}")))?;
        }
    }
    info!("rendered {} squares", region.len());
    Ok(ExitCode::SUCCESS)
}

fn parse_overlay(s: &str) -> Result<f64, Failure> {
    let Some(rest) = s.strip_prefix("ball:") else {
        return Err(config_error(format!("--overlay takes ball:N, got `{s}`")));
    };
    let n: f64 = rest
        .parse()
        .map_err(|_| config_error(format!("overlay mass is not a number: `{rest}`")))?;
    if !(n > 0.0) || !n.is_finite() {
        return Err(config_error(format!(
            "overlay mass must be positive and finite, got {n}"
        )));
    }
    Ok(n)
}

/// Unit square per vertex, y flipped so teeth grow upward on screen, plus
/// the analytic ball outline when asked. Pure function of its inputs, so
/// rerenders are byte-identical.
fn render_svg(region: &Region, overlay: Option<f64>) -> String {
    let mut lo_x = f64::INFINITY;
    let mut hi_x = f64::NEG_INFINITY;
    let mut lo_y = f64::INFINITY;
    let mut hi_y = f64::NEG_INFINITY;
    let mut cover = |x: f64, y: f64| {
        lo_x = lo_x.min(x);
        hi_x = hi_x.max(x);
        lo_y = lo_y.min(y);
        hi_y = hi_y.max(y);
    };
    let verts = region.sorted_vertices();
    for v in &verts {
        cover(v.x as f64 - 0.5, -(v.y as f64) - 0.5);
        cover(v.x as f64 + 0.5, -(v.y as f64) + 0.5);
    }
    if let Some(n) = overlay {
        let r = n.cbrt();
        cover(-K * r, -L * r * r);
        cover(K * r, L * r * r);
    }
    if verts.is_empty() && overlay.is_none() {
        cover(-1.0, -1.0);
        cover(1.0, 1.0);
    }
    let (x0, y0) = (lo_x - 1.0, lo_y - 1.0);
    let (w, h) = (hi_x - lo_x + 2.0, hi_y - lo_y + 2.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x0:.3} {y0:.3} {w:.3} {h:.3}\">\n"
    );
    svg.push_str("<g fill=\"#31679b\" shape-rendering=\"crispEdges\">\n");
    for v in &verts {
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"1\" height=\"1\"/>\n",
            v.x as f64 - 0.5,
            -(v.y as f64) - 0.5
        ));
    }
    svg.push_str("</g>\n");
    if let Some(n) = overlay {
        let r = n.cbrt();
        let reach = K * r;
        let height = |x: f64| {
            let rem = r - x.abs() / K;
            L * rem * rem
        };
        let mut d = String::new();
        for i in 0..=OUTLINE_SAMPLES {
            let x = reach * (2.0 * i as f64 / OUTLINE_SAMPLES as f64 - 1.0);
            let tag = if i == 0 { 'M' } else { 'L' };
            d.push_str(&format!("{tag}{x:.3} {:.3}", -height(x)));
        }
        for i in (0..=OUTLINE_SAMPLES).rev() {
            let x = reach * (2.0 * i as f64 / OUTLINE_SAMPLES as f64 - 1.0);
            d.push_str(&format!("L{x:.3} {:.3}", height(x)));
        }
        d.push('Z');
        let stroke = (w.max(h) / 300.0).max(0.4);
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#b2372b\" stroke-width=\"{stroke:.3}\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// shared plumbing

/// Runs `f` once per seed on `jobs` worker threads; results come back
/// sorted by seed, so aggregation never depends on scheduling.
fn run_trials<T: Send, F: Fn(u64) -> Result<T, Failure> + Sync>(
    seeds: &[u64],
    jobs: usize,
    f: F,
) -> Result<Vec<(u64, T)>, Failure> {
    let jobs = jobs.clamp(1, seeds.len().max(1));
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<(u64, Result<T, Failure>)>> = Mutex::new(Vec::with_capacity(seeds.len()));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                debug!("trial seed {seed} starting");
                let r = f(seed);
                done.lock().unwrap().push((seed, r));
            });
        }
    });
    let mut rows = done.into_inner().unwrap();
    rows.sort_by_key(|&(seed, _)| seed);
    let mut out = Vec::with_capacity(rows.len());
    for (seed, r) in rows {
        out.push((
            seed,
            r.map_err(|mut e| {
                e.message = format!("seed {seed}: {}", e.message);
                e
            })?,
        ));
    }
    Ok(out)
}

fn kind_name(kind: GraphKind) -> &'static str {
    match kind {
        GraphKind::Comb2 => "comb2",
        GraphKind::Line => "line",
    }
}

fn region_json(region: &Region) -> Value {
    let vertices: Vec<Value> = region
        .sorted_vertices()
        .iter()
        .map(|v| json!([v.x, v.y]))
        .collect();
    json!({"kind": kind_name(region.kind()), "vertices": vertices})
}

fn write_region_file(path: &Path, region: &Region, format: Format) -> Result<(), Failure> {
    match format {
        Format::Csv => write_to(path, |w| region.write_csv(w)),
        Format::Json => write_to(path, |w| {
            let text = serde_json::to_string(&region_json(region)).expect("region serializes");
            writeln!(w, "{text}")
        }),
    }
}

fn write_region_stdout(region: &Region, format: Format) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    let res = match format {
        Format::Csv => region.write_csv(&mut out),
        Format::Json => {
            let text = serde_json::to_string(&region_json(region)).expect("region serializes");
            writeln!(out, "{text}")
        }
    };
    res.and_then(|()| out.flush())
        .map_err(|e| run_error(format!("writing stdout: {e}")))
}

fn write_to(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), Failure> {
    let file = File::create(path)
        .map_err(|e| run_error(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| run_error(format!("writing {}: {e}", path.display())))?;
    debug!("wrote {}", path.display());
    Ok(())
}

fn emit_metadata(meta: &Value, to_stderr: bool) {
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    if to_stderr {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
}

fn extents_json(region: &Region) -> Value {
    let mut iter = region.iter();
    let Some(first) = iter.next() else {
        return Value::Null;
    };
    let init = (first.x, first.x, first.y, first.y);
    let (x_min, x_max, y_min, y_max) = iter.fold(init, |(a, b, c, d), v| {
        (a.min(v.x), b.max(v.x), c.min(v.y), d.max(v.y))
    });
    json!({"x_min": x_min, "x_max": x_max, "y_min": y_min, "y_max": y_max})
}

/// out/c.csv with seed 7 becomes out/c-s7.csv.
fn seeded_path(base: &Path, seed: u64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-s{seed}.{ext}"),
        None => format!("{stem}-s{seed}"),
    };
    base.with_file_name(name)
}
