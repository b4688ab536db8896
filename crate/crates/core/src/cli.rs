//! `flatsocp` command line: `plan`, `verify` and `bench`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use nalgebra::Vector2;

use crate::error::PlanError;
use crate::path::{default_relaxation_params, RelaxationParams};
use crate::pipeline::{plan, PlanOptions, StageTimings};
use crate::scenario::Scenario;
use crate::verify::{sample_margins, state_residual, Sample, Trajectory, DEFAULT_SAMPLES, SET_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Sampled margin below which `verify` rejects a stored trajectory.
pub const VERIFY_TOL: f64 = 1e-6;

pub const CSV_HEADER: [&str; 11] = ["t", "x", "y", "v", "psi", "vdot", "psidot", "gamma", "s", "sdot", "sddot"];

#[derive(Debug, Parser)]
#[command(name = "flatsocp", about = "Safe kinematic bicycle trajectories from three sequential SOCPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a trajectory; writes <PREFIX>.traj.csv and <PREFIX>.report.json.
    Plan {
        scenario: PathBuf,
        prefix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Reserved; the pipeline is deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "rhat-x", allow_hyphen_values = true)]
        rhat_x: Option<f64>,
        #[arg(long = "rhat-y", allow_hyphen_values = true)]
        rhat_y: Option<f64>,
    },
    /// Re-check a stored trajectory against a scenario by sampling.
    Verify { trajectory: PathBuf, scenario: PathBuf },
    /// Time the pipeline over repeated runs.
    Bench {
        scenario: PathBuf,
        #[arg(default_value_t = 50)]
        repetitions: usize,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
    },
}

/// Exit code for a pipeline error.
pub fn exit_code(err: &PlanError) -> i32 {
    match err {
        PlanError::Scenario(_) => EXIT_SCHEMA,
        PlanError::Degenerate(_) | PlanError::Infeasible { .. } | PlanError::Unbounded { .. } => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    }
}

fn report_error(err: &PlanError) -> i32 {
    match err.stage() {
        Some(stage) if !err.to_string().contains(stage.name()) => eprintln!("error: {stage}: {err}"),
        _ => eprintln!("error: {err}"),
    }
    exit_code(err)
}

fn load_scenario(path: &Path) -> Result<Scenario, i32> {
    Scenario::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_SCHEMA
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for s in &traj.samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV with the fixed header.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<Sample>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(format!("expected header {}", CSV_HEADER.join(",")));
    }
    let rows = r
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| format!("row {i}: {e}")))
        .collect::<Result<Vec<Sample>, _>>()?;
    if rows.is_empty() {
        return Err("no trajectory rows".into());
    }
    Ok(rows)
}

fn relaxation(
    scenario: &Scenario,
    alpha: Option<f64>,
    rx: Option<f64>,
    ry: Option<f64>,
) -> Result<Option<RelaxationParams>, PlanError> {
    if alpha.is_none() && rx.is_none() && ry.is_none() {
        return Ok(None);
    }
    let base = default_relaxation_params(scenario).ok();
    let alpha = alpha.or(base.map(|b| b.alpha));
    let dir = match (rx, ry, base) {
        (Some(x), Some(y), _) => Some(Vector2::new(x, y)),
        (x, y, Some(b)) => Some(Vector2::new(x.unwrap_or(b.direction.x), y.unwrap_or(b.direction.y))),
        _ => None,
    };
    match (alpha, dir) {
        (Some(a), Some(d)) => Ok(Some(RelaxationParams::new(a, d)?)),
        _ => Err(PlanError::Degenerate("give both --alpha and --rhat-x/--rhat-y".into())),
    }
}

fn cmd_plan(
    scenario_path: &Path,
    prefix: &Path,
    samples: usize,
    alpha: Option<f64>,
    rx: Option<f64>,
    ry: Option<f64>,
) -> i32 {
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if samples < 2 {
        eprintln!("error: --samples must be at least 2");
        return EXIT_SCHEMA;
    }
    let relax = match relaxation(&scenario, alpha, rx, ry) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    let result = match plan(&scenario, &PlanOptions { relaxation: relax, samples }) {
        Ok(p) => p,
        Err(e) => return report_error(&e),
    };
    let csv_path = with_suffix(prefix, ".traj.csv");
    let json_path = with_suffix(prefix, ".report.json");
    if let Err(e) = write_trajectory_csv(&csv_path, &result.trajectory) {
        eprintln!("error: cannot write {}: {e}", csv_path.display());
        return EXIT_NUMERICAL;
    }
    if let Err(e) = fs::write(&json_path, result.report.to_json()) {
        eprintln!("error: cannot write {}: {e}", json_path.display());
        return EXIT_NUMERICAL;
    }
    let r = &result.report;
    println!("t_f = {:.6} s, objective = {:.6}", r.t_f, r.objective);
    for s in &r.sets {
        let margin = s.worst_margin.map_or("n/a".to_string(), |m| format!("{m:.3e}"));
        println!("{:<7} certificate {:<4} worst margin {margin}", s.name, if s.certificate { "pass" } else { "FAIL" });
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    if r.all_certificates_pass() {
        EXIT_OK
    } else {
        EXIT_CERTIFICATE
    }
}

fn cmd_verify(traj_path: &Path, scenario_path: &Path) -> i32 {
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let rows = match read_trajectory_csv(traj_path) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", traj_path.display());
            return EXIT_SCHEMA;
        }
    };
    let traj = match Trajectory::from_samples(rows) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", traj_path.display());
            return EXIT_SCHEMA;
        }
    };
    for (i, s) in traj.samples.iter().enumerate() {
        for (name, m) in SET_NAMES.iter().zip(sample_margins(s, &scenario)) {
            if let Some(m) = m.filter(|m| *m < -VERIFY_TOL) {
                eprintln!("violation: row {i} (t = {}): {name} margin {m:.6e}", s.t);
                return EXIT_CERTIFICATE;
            }
        }
    }
    let last = traj.len() - 1;
    let ends = [(0, &scenario.initial), (last, &scenario.goal)];
    for (i, want) in ends {
        let r = state_residual(&traj.samples[i].state(), want);
        if r > VERIFY_TOL {
            eprintln!("violation: row {i}: endpoint state residual {r:.6e}");
            return EXIT_CERTIFICATE;
        }
    }
    println!("ok: {} rows within margins", traj.len());
    EXIT_OK
}

struct Stats {
    mean: Duration,
    min: Duration,
    max: Duration,
}

fn stats(xs: &[Duration]) -> Stats {
    let total: Duration = xs.iter().sum();
    Stats {
        mean: total / xs.len() as u32,
        min: xs.iter().copied().min().unwrap_or_default(),
        max: xs.iter().copied().max().unwrap_or_default(),
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn cmd_bench(scenario_path: &Path, reps: usize, samples: usize) -> i32 {
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if reps == 0 {
        eprintln!("error: repetitions must be at least 1");
        return EXIT_SCHEMA;
    }
    let mut runs: Vec<StageTimings> = Vec::with_capacity(reps);
    let mut objective = None;
    for _ in 0..reps {
        match plan(&scenario, &PlanOptions { relaxation: None, samples }) {
            Ok(p) => {
                objective = Some(p.report.objective);
                runs.push(p.timings);
            }
            Err(e) => return report_error(&e),
        }
    }
    let mut out = std::io::stdout().lock();
    if reps == 1 {
        let t = runs[0];
        let _ = writeln!(
            out,
            "total {:.3} ms (path {:.3}, time {:.3}, speed {:.3}, verify {:.3}), objective {:.6}",
            ms(t.total),
            ms(t.path),
            ms(t.time),
            ms(t.speed),
            ms(t.verify),
            objective.unwrap_or(f64::NAN)
        );
        return EXIT_OK;
    }
    let _ = writeln!(out, "{reps} runs, objective {:.6}", objective.unwrap_or(f64::NAN));
    let stages: [(&str, fn(&StageTimings) -> Duration); 5] = [
        ("path", |t| t.path),
        ("time", |t| t.time),
        ("speed", |t| t.speed),
        ("verify", |t| t.verify),
        ("total", |t| t.total),
    ];
    for (name, get) in stages {
        let xs: Vec<Duration> = runs.iter().map(get).collect();
        let s = stats(&xs);
        let _ = writeln!(out, "{name:<7} mean {:9.3} ms  min {:9.3} ms  max {:9.3} ms", ms(s.mean), ms(s.min), ms(s.max));
    }
    EXIT_OK
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Plan { scenario, prefix, samples, seed: _, alpha, rhat_x, rhat_y } => {
            cmd_plan(&scenario, &prefix, samples, alpha, rhat_x, rhat_y)
        }
        Command::Verify { trajectory, scenario } => cmd_verify(&trajectory, &scenario),
        Command::Bench { scenario, repetitions, samples } => cmd_bench(&scenario, repetitions, samples),
    }
}
