//! Path, time and speed stages in sequence, followed by reconstruction and
//! verification.

use std::time::{Duration, Instant};

use crate::error::{PlanError, Stage};
use crate::path::{solve_path_with, PathSolution, RelaxationParams};
use crate::scenario::Scenario;
use crate::socp::{ClarabelSolver, ConicSolver};
use crate::speed::{solve_speed_with, SpeedSolution};
use crate::time::{solve_time_with, TimeGridSolution};
use crate::verify::{reconstruct, verify, SafetyReport, Trajectory, DEFAULT_SAMPLES};

/// Factor applied to `t_f` when the speed stage is infeasible.
pub const RETRY_INFLATION: f64 = 1.2;
/// Number of speed-stage retries after the first attempt.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone)]
pub struct PlanOptions {
    /// Overrides the default steering relaxation parameters.
    pub relaxation: Option<RelaxationParams>,
    pub samples: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { relaxation: None, samples: DEFAULT_SAMPLES }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub path: Duration,
    /// Zero when the duration was given.
    pub time: Duration,
    /// All speed attempts together.
    pub speed: Duration,
    pub verify: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub path: PathSolution,
    pub time: Option<TimeGridSolution>,
    pub speed: SpeedSolution,
    pub trajectory: Trajectory,
    pub report: SafetyReport,
    pub timings: StageTimings,
    /// Speed-stage retries that were needed.
    pub retries: usize,
}

pub fn plan(scenario: &Scenario, options: &PlanOptions) -> Result<Plan, PlanError> {
    plan_with(scenario, options, &ClarabelSolver::default())
}

pub fn plan_with(scenario: &Scenario, options: &PlanOptions, solver: &dyn ConicSolver) -> Result<Plan, PlanError> {
    let started = Instant::now();
    scenario.validate()?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let path = solve_path_with(scenario, options.relaxation, solver)?;
    timings.path = t.elapsed();

    let t = Instant::now();
    let (time, t_f0) = match scenario.fixed_tf {
        Some(tf) => (None, tf),
        None => {
            let sol = solve_time_with(&path, scenario, scenario.spline.time_segments, solver)?;
            let tf = sol.t_f;
            (Some(sol), tf)
        }
    };
    timings.time = t.elapsed();

    let t = Instant::now();
    let (v0, vf) = (scenario.initial.v, scenario.goal.v);
    let mut t_f = t_f0;
    let mut retries = 0;
    let speed = loop {
        match solve_speed_with(&path, &scenario.vehicle, &scenario.spline, t_f, v0, vf, solver) {
            Ok(s) => break s,
            Err(PlanError::Infeasible { .. }) | Err(PlanError::NumericalFailure { .. }) if retries < MAX_RETRIES => {
                retries += 1;
                t_f *= RETRY_INFLATION;
            }
            Err(PlanError::Infeasible { stage, .. }) => {
                return Err(PlanError::Infeasible {
                    stage,
                    detail: format!("after {retries} retries, last duration {t_f:.6} s from initial {t_f0:.6} s"),
                })
            }
            Err(e) => return Err(e),
        }
    };
    timings.speed = t.elapsed();

    let t = Instant::now();
    let trajectory = reconstruct(&path, &speed, scenario.vehicle.wheelbase, options.samples)?;
    let mut report = verify(&trajectory, &path, &speed, scenario);
    if retries > 0 {
        report.notes.push(format!(
            "{} infeasible at t_f = {t_f0:.6} s; succeeded after {retries} retries with t_f inflated by {RETRY_INFLATION}",
            Stage::Speed
        ));
    }
    timings.verify = t.elapsed();
    timings.total = started.elapsed();
    Ok(Plan { path, time, speed, trajectory, report, timings, retries })
}
