//! Time stage: on a fixed path, trades duration against acceleration on a
//! uniform grid `s_i = iΔs` and recovers the duration `t_f`.
//!
//! With `b = ṡ²` and `a = s̈` as functions of `s`, `b' = 2a` and
//! `t_f = ∫ b^{-1/2} ds`. For `a` piecewise constant each segment lasts
//! `Δt_i = 2Δs / (√b_i + √b_{i−1})`; the duration term is embedded with
//! `c_i <= √b_i` and `d_i >= 1/(c_i + c_{i+1})`.

use std::time::{Duration, Instant};

use crate::error::{check_le, CertificateFailure, PlanError, Stage};
use crate::flat::{path_point, FlatError};
use crate::path::{PathSolution, BACKOFF, INVARIANT_TOL};
use crate::scenario::Scenario;
use crate::socp::{AffineExpr, ClarabelSolver, ConicProgram, ConicSolver, SolveStatus, VarId};

/// Path data at one grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub s: f64,
    /// `‖θ'(s_i)‖`
    pub tangent_norm: f64,
    /// `θ'(s_i)·θ''(s_i) / ‖θ'(s_i)‖`
    pub f: f64,
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

/// Samples the path at `s_i = i/N_t`, `i = 0..=N_t`.
pub fn grid_nodes(path: &PathSolution, n_segments: usize) -> Result<Vec<GridNode>, PlanError> {
    (0..=n_segments)
        .map(|i| {
            let s = i as f64 / n_segments as f64;
            let p = path_point(&path.path, s)?;
            let norm = p.d1.norm();
            if !(norm > 0.0) {
                return Err(FlatError::DegeneratePath { s }.into());
            }
            Ok(GridNode { s, tangent_norm: norm, f: p.d1.dot(&p.d2) / norm, d1: [p.d1.x, p.d1.y], d2: [p.d2.x, p.d2.y] })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TimeVars {
    pub a: Vec<VarId>,
    pub b: Vec<VarId>,
    pub c: Vec<VarId>,
    pub d: Vec<VarId>,
    /// Epigraph variables of the acceleration terms.
    pub w: Vec<VarId>,
}

/// The program works in scaled variables `σ²a, σ²b, σc, d/σ` with
/// `σ = v̄_θ`, which keeps `b` near the squared vehicle speed; both
/// embedding cones are invariant under this scaling.
#[derive(Debug, Clone)]
pub struct TimeProgram {
    pub program: ConicProgram,
    pub vars: TimeVars,
    pub nodes: Vec<GridNode>,
    pub scale: f64,
}

impl TimeProgram {
    /// Unscaled `(a, b, c, d)` from a solver point.
    pub fn unscale(&self, x: &[f64]) -> [Vec<f64>; 4] {
        let s = self.scale;
        let get = |ids: &[VarId], k: f64| ids.iter().map(|v| x[v.0] * k).collect::<Vec<_>>();
        [get(&self.vars.a, 1.0 / (s * s)), get(&self.vars.b, 1.0 / (s * s)), get(&self.vars.c, 1.0 / s), get(&self.vars.d, s)]
    }
}

/// Builds the time program. The acceleration cost `‖a_iθ'(s_i) + b_iθ''(s_i)‖²`
/// enters with weight `Δs`, the rectangle rule for its integral over `s`, so
/// that refining the grid converges to the continuous problem.
pub fn build_time_socp(path: &PathSolution, scenario: &Scenario) -> Result<TimeProgram, PlanError> {
    let n = scenario.spline.time_segments;
    build_time_socp_weighted(path, scenario, n, 1.0 / n as f64)
}

/// As [`build_time_socp`] with an explicit grid size and weight on the
/// acceleration terms.
pub fn build_time_socp_weighted(
    path: &PathSolution,
    scenario: &Scenario,
    n_segments: usize,
    accel_weight: f64,
) -> Result<TimeProgram, PlanError> {
    let n = n_segments;
    if n == 0 {
        return Err(PlanError::InvalidInput("time grid needs at least one segment".into()));
    }
    let veh = &scenario.vehicle;
    let (v0, vf) = (scenario.initial.v, scenario.goal.v);
    if v0 > veh.max_speed || vf > veh.max_speed || v0 < 0.0 || vf < 0.0 {
        return Err(PlanError::InvalidInput("endpoint speeds exceed the speed limit".into()));
    }
    let nodes = grid_nodes(path, n)?;
    let ds = 1.0 / n as f64;
    let vmax2 = (veh.max_speed * (1.0 - BACKOFF)).powi(2);
    let amax = veh.max_accel * (1.0 - BACKOFF);
    let sigma = path.v_theta_max;
    let inv2 = 1.0 / (sigma * sigma);

    let mut p = ConicProgram::new();
    let mut vars = TimeVars { a: Vec::new(), b: Vec::new(), c: Vec::new(), d: Vec::new(), w: Vec::new() };
    for i in 0..=n {
        vars.a.push(p.add_var(format!("a[{i}]"))?);
        vars.b.push(p.add_var(format!("b[{i}]"))?);
        vars.c.push(p.add_var(format!("c[{i}]"))?);
    }
    for i in 0..n {
        vars.d.push(p.add_var(format!("d[{i}]"))?);
    }
    let (a, b, c, d) = (&vars.a, &vars.b, &vars.c, &vars.d);

    for i in 0..=n {
        // b_i >= c_i²
        let bi = AffineExpr::from(b[i]);
        p.add_cone(vec![AffineExpr::term(c[i], 2.0), bi.clone() - 1.0], bi + 1.0)?;
    }
    for i in 0..n {
        // (c_i + c_{i+1}) d_i >= 1
        let cbar = AffineExpr::from(c[i]) + c[i + 1];
        p.add_cone(vec![AffineExpr::constant(2.0), cbar.clone() - d[i]], cbar + d[i])?;
        p.add_objective(d[i], 2.0 * scenario.nu * ds * sigma);
    }
    for i in 1..=n {
        p.add_eq(AffineExpr::term(a[i], 2.0 * ds) - b[i] + b[i - 1])?;
    }
    let (g0, gf) = (nodes[0].tangent_norm.powi(2), nodes[n].tangent_norm.powi(2));
    p.add_eq(AffineExpr::term(b[0], g0 * inv2) - v0 * v0)?;
    p.add_eq(AffineExpr::term(b[n], gf * inv2) - vf * vf)?;
    for (i, node) in nodes.iter().enumerate() {
        let g = node.tangent_norm.powi(2);
        if i != 0 && i != n {
            p.add_le(AffineExpr::term(b[i], g * inv2), AffineExpr::constant(vmax2))?;
        }
        let acc = AffineExpr::term(a[i], node.tangent_norm * inv2) + AffineExpr::term(b[i], node.f * inv2);
        p.add_le(acc.clone(), AffineExpr::constant(amax))?;
        p.add_le(-acc, AffineExpr::constant(amax))?;
        let rows = [
            AffineExpr::term(a[i], node.d1[0] * inv2) + AffineExpr::term(b[i], node.d2[0] * inv2),
            AffineExpr::term(a[i], node.d1[1] * inv2) + AffineExpr::term(b[i], node.d2[1] * inv2),
        ];
        vars.w.push(p.add_quadratic_cost(&format!("w[{i}]"), &rows, accel_weight)?);
    }
    Ok(TimeProgram { program: p, vars, nodes, scale: sigma })
}

/// Segment durations `Δt_i = 2Δs/(√b_i + √b_{i−1})`, `i = 1..=N_t`, for
/// `b` sampled on a uniform grid over `[0, 1]`.
pub fn recover_duration(b: &[f64]) -> Result<Vec<f64>, PlanError> {
    if b.len() < 2 {
        return Err(PlanError::InvalidInput("need at least two grid nodes".into()));
    }
    let ds = 1.0 / (b.len() - 1) as f64;
    b.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let den = w[0].max(0.0).sqrt() + w[1].max(0.0).sqrt();
            if den > 0.0 {
                Ok(2.0 * ds / den)
            } else {
                Err(PlanError::Stalled { segment: i + 1 })
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TimeGridSolution {
    pub n_segments: usize,
    pub ds: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    /// `Δt_1..Δt_{N_t}`.
    pub durations: Vec<f64>,
    pub t_f: f64,
    pub nodes: Vec<GridNode>,
    pub objective: f64,
    pub solve_time: Duration,
}

impl TimeGridSolution {
    pub fn check_invariants(&self, scenario: &Scenario, tol: f64) -> Result<(), CertificateFailure> {
        let veh = &scenario.vehicle;
        let n = self.n_segments;
        for (i, node) in self.nodes.iter().enumerate() {
            check_le("nonnegative b", Some(i), -self.b[i], 0.0, tol)?;
            let g = node.tangent_norm.powi(2);
            check_le("grid speed bound", Some(i), self.b[i] * g, veh.max_speed.powi(2), tol)?;
            let acc = self.a[i] * node.tangent_norm + self.b[i] * node.f;
            check_le("grid acceleration bound", Some(i), acc.abs(), veh.max_accel, tol)?;
        }
        for i in 1..=n {
            let lhs = 2.0 * self.ds * self.a[i];
            let rhs = self.b[i] - self.b[i - 1];
            check_le("differential link", Some(i), (lhs - rhs).abs(), 0.0, tol * (1.0 + self.b[i].abs()))?;
        }
        let ends = [
            (0, self.b[0] * self.nodes[0].tangent_norm.powi(2), scenario.initial.v.powi(2)),
            (n, self.b[n] * self.nodes[n].tangent_norm.powi(2), scenario.goal.v.powi(2)),
        ];
        for (i, got, want) in ends {
            check_le("endpoint speed", Some(i), (got - want).abs(), 0.0, tol * (1.0 + want))?;
        }
        if !(self.t_f > 0.0 && self.t_f.is_finite()) {
            return Err(CertificateFailure { condition: "positive duration", index: None, excess: -self.t_f });
        }
        Ok(())
    }
}

pub fn solve_time(path: &PathSolution, scenario: &Scenario) -> Result<TimeGridSolution, PlanError> {
    solve_time_with(path, scenario, scenario.spline.time_segments, &ClarabelSolver::default())
}

/// Solves the time program on `n_segments` grid segments.
pub fn solve_time_with(
    path: &PathSolution,
    scenario: &Scenario,
    n_segments: usize,
    solver: &dyn ConicSolver,
) -> Result<TimeGridSolution, PlanError> {
    let started = Instant::now();
    let built = build_time_socp_weighted(path, scenario, n_segments, 1.0 / n_segments.max(1) as f64)?;
    let res = solver.solve(&built.program);
    if res.status != SolveStatus::Optimal {
        return Err(PlanError::from_status(Stage::Time, res.status));
    }
    let n = n_segments;
    let ds = 1.0 / n as f64;
    let [mut a, mut b, c, d] = built.unscale(&res.x);
    b.iter_mut().for_each(|v| *v = v.max(0.0));
    b[0] = scenario.initial.v.powi(2) / built.nodes[0].tangent_norm.powi(2);
    b[n] = scenario.goal.v.powi(2) / built.nodes[n].tangent_norm.powi(2);
    for i in 1..=n {
        a[i] = (b[i] - b[i - 1]) / (2.0 * ds);
    }
    let durations = recover_duration(&b)?;
    let t_f = durations.iter().sum();
    let sol = TimeGridSolution {
        n_segments: n,
        ds,
        a,
        b,
        c,
        d,
        durations,
        t_f,
        nodes: built.nodes,
        objective: res.objective,
        solve_time: started.elapsed(),
    };
    sol.check_invariants(scenario, INVARIANT_TOL)
        .map_err(|failure| PlanError::CertificateViolation { stage: Stage::Time, failure })?;
    Ok(sol)
}
