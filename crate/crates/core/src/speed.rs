//! Speed stage: a B-spline profile `s: [0, t_f] → [0, 1]` whose control
//! points certify the speed and longitudinal acceleration bounds along a
//! certified path.
//!
//! On each knot span `k` the first- and second-derivative control points
//! bound `ṡ <= κ_k` and `|s̈| <= ε_k`. Since `|a_t| <= |s̈| v̄_θ` and
//! `|a_n| <= ṡ² ā_θ`, the cone `κ_k² ā_θ + ε_k v̄_θ <= ā` bounds `|v̇|`.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::bspline::{derivative_matrix, roughness_factor, roughness_matrix, BSplineCurve, KnotVector};
use crate::error::{check_le, CertificateFailure, PlanError, Stage};
use crate::flat::VehicleParams;
use crate::path::{PathSolution, BACKOFF, INVARIANT_TOL};
use crate::scenario::SplineParams;
use crate::socp::{AffineExpr, ClarabelSolver, ConicProgram, ConicSolver, SolveStatus, VarId};

/// `‖A(κ, ε) + b‖ <= c·(κ, ε) + d` with `A = diag(√(2ā_θ), −v̄_θ/√2)`,
/// `b = (0, (ā−1)/√2)`, `c = (0, −v̄_θ/√2)`, `d = (ā+1)/√2`; equivalent to
/// `κ² ā_θ + ε v̄_θ <= ā`.
pub fn accel_window_cone(
    kappa: VarId,
    eps: VarId,
    a_theta_max: f64,
    v_theta_max: f64,
    max_accel: f64,
) -> (Vec<AffineExpr>, AffineExpr) {
    let e = AffineExpr::term(eps, -v_theta_max / SQRT_2);
    let lhs = vec![AffineExpr::term(kappa, (2.0 * a_theta_max).sqrt()), e.clone() + (max_accel - 1.0) / SQRT_2];
    (lhs, e + (max_accel + 1.0) / SQRT_2)
}

#[derive(Debug, Clone)]
pub struct SpeedVars {
    pub p: Vec<VarId>,
    pub kappa: Vec<VarId>,
    pub eps: Vec<VarId>,
    pub jerk: VarId,
}

#[derive(Debug, Clone)]
pub struct SpeedProgram {
    pub program: ConicProgram,
    pub vars: SpeedVars,
    pub knots: KnotVector,
}

fn vcp_expr(b: &DMatrix<f64>, j: usize, p: &[VarId]) -> AffineExpr {
    let mut e = AffineExpr::zero();
    for (i, v) in p.iter().enumerate() {
        if b[(i, j)] != 0.0 {
            e.add_term(*v, b[(i, j)]);
        }
    }
    e
}

fn profile_knots(spline: &SplineParams, t_f: f64) -> Result<KnotVector, PlanError> {
    Ok(KnotVector::clamped_uniform(spline.profile_degree, spline.profile_segments + 1, 0.0, t_f)?)
}

/// Builds the speed program. The jerk objective is assembled on the
/// normalized horizon `[0, 1]`, i.e. it equals `t_f⁵ ∫ s⃛² dt`.
pub fn build_speed_socp(
    path: &PathSolution,
    vehicle: &VehicleParams,
    spline: &SplineParams,
    t_f: f64,
    v0: f64,
    vf: f64,
) -> Result<SpeedProgram, PlanError> {
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(PlanError::InvalidInput(format!("duration {t_f} must be positive")));
    }
    let vt = path.v_theta_max;
    if !(vt > 0.0) {
        return Err(PlanError::InvalidInput("path tangent bound must be positive".into()));
    }
    for v in [v0, vf] {
        if !(0.0..=vehicle.max_speed).contains(&v) {
            return Err(PlanError::InvalidInput(format!("endpoint speed {v} outside [0, {}]", vehicle.max_speed)));
        }
    }
    let knots = profile_knots(spline, t_f)?;
    let d = spline.profile_degree;
    let n = spline.profile_segments;
    let b1 = derivative_matrix(&knots, 1)?.matrix;
    let b2 = derivative_matrix(&knots, 2)?.matrix;
    let vmax = vehicle.max_speed * (1.0 - BACKOFF);
    let amax = vehicle.max_accel * (1.0 - BACKOFF);

    let mut prog = ConicProgram::new();
    let p = (0..=n).map(|j| prog.add_var(format!("p[{j}]"))).collect::<Result<Vec<_>, _>>()?;
    let kappa = (0..=n - d).map(|k| prog.add_var(format!("kappa[{k}]"))).collect::<Result<Vec<_>, _>>()?;
    let eps = (0..=n - d).map(|k| prog.add_var(format!("eps[{k}]"))).collect::<Result<Vec<_>, _>>()?;

    prog.add_eq(AffineExpr::from(p[0]))?;
    prog.add_eq(AffineExpr::from(p[n]) - 1.0)?;
    prog.add_eq(vcp_expr(&b1, 1, &p) * vt - v0)?;
    prog.add_eq(vcp_expr(&b1, n, &p) * vt - vf)?;
    for j in 2..n {
        prog.add_le(vcp_expr(&b1, j, &p) * vt, AffineExpr::constant(vmax))?;
    }
    for k in 0..=n - d {
        for j in k + 1..=k + d {
            let q = vcp_expr(&b1, j, &p);
            prog.add_nonneg(q.clone())?;
            prog.add_le(q, AffineExpr::from(kappa[k]))?;
        }
        for j in k + 2..=k + d {
            let q = vcp_expr(&b2, j, &p);
            prog.add_le(q.clone(), AffineExpr::from(eps[k]))?;
            prog.add_le(-q, AffineExpr::from(eps[k]))?;
        }
        let (lhs, rhs) = accel_window_cone(kappa[k], eps[k], path.a_theta_max, vt, amax);
        prog.add_cone(lhs, rhs)?;
    }

    let unit = profile_knots(spline, 1.0)?;
    let f = roughness_factor(&unit, 3)?;
    let rows: Vec<AffineExpr> = (0..=n)
        .map(|i| {
            let mut e = AffineExpr::zero();
            for (j, v) in p.iter().enumerate() {
                if f[(i, j)] != 0.0 {
                    e.add_term(*v, f[(i, j)]);
                }
            }
            e
        })
        .collect();
    let jerk = prog.add_quadratic_cost("jerk", &rows, 1.0)?;
    Ok(SpeedProgram { program: prog, vars: SpeedVars { p, kappa, eps, jerk }, knots })
}

/// A certified speed profile.
#[derive(Debug, Clone)]
pub struct SpeedSolution {
    pub profile: BSplineCurve,
    /// Per-window bounds on `ṡ`.
    pub kappa: Vec<f64>,
    /// Per-window bounds on `|s̈|`.
    pub epsilon: Vec<f64>,
    pub t_f: f64,
    /// `∫ s⃛² dt`.
    pub jerk_cost: f64,
    pub solve_time: Duration,
}

impl SpeedSolution {
    pub fn last_index(&self) -> usize {
        self.profile.knots().last_index()
    }

    fn vcp(&self, order: usize, j: usize) -> f64 {
        self.profile.vcps(order).expect("order within degree")[(0, j)]
    }

    /// Endpoint values and speeds.
    pub fn check_endpoints(&self, v_theta_max: f64, v0: f64, vf: f64, tol: f64) -> Result<(), CertificateFailure> {
        let n = self.last_index();
        let checks = [(0, 0, 0.0), (0, n, 1.0), (1, 1, v0), (1, n, vf)];
        for (order, j, want) in checks {
            let got = if order == 0 { self.vcp(0, j) } else { v_theta_max * self.vcp(1, j) };
            check_le("profile endpoint condition", Some(j), (got - want).abs(), 0.0, tol * (1.0 + want))?;
        }
        Ok(())
    }

    /// `0 <= v̄_θ p^(1)_j <= v̄`.
    pub fn check_speed_certificate(&self, v_theta_max: f64, max_speed: f64, tol: f64) -> Result<(), CertificateFailure> {
        for j in 1..=self.last_index() {
            let v = v_theta_max * self.vcp(1, j);
            check_le("profile speed lower bound", Some(j), -v, 0.0, tol)?;
            check_le("profile speed upper bound", Some(j), v, max_speed, tol)?;
        }
        Ok(())
    }

    /// Window bounds and `κ_k² ā_θ + ε_k v̄_θ <= ā`. The reported index is
    /// the offending virtual control point, or the window for the cone.
    pub fn check_accel_certificate(
        &self,
        v_theta_max: f64,
        a_theta_max: f64,
        max_accel: f64,
        tol: f64,
    ) -> Result<(), CertificateFailure> {
        let d = self.profile.degree();
        for (k, (&kap, &eps)) in self.kappa.iter().zip(&self.epsilon).enumerate() {
            for j in k + 1..=k + d {
                let q = self.vcp(1, j);
                check_le("window speed lower bound", Some(j), -q, 0.0, tol)?;
                check_le("window speed bound", Some(j), q, kap, tol)?;
            }
            for j in k + 2..=k + d {
                check_le("window acceleration bound", Some(j), self.vcp(2, j).abs(), eps, tol)?;
            }
            check_le("acceleration budget", Some(k), kap * kap * a_theta_max + eps * v_theta_max, max_accel, tol)?;
        }
        Ok(())
    }

    pub fn check_invariants(
        &self,
        path: &PathSolution,
        vehicle: &VehicleParams,
        v0: f64,
        vf: f64,
        tol: f64,
    ) -> Result<(), CertificateFailure> {
        self.check_endpoints(path.v_theta_max, v0, vf, tol)?;
        self.check_speed_certificate(path.v_theta_max, vehicle.max_speed, tol)?;
        self.check_accel_certificate(path.v_theta_max, path.a_theta_max, vehicle.max_accel, tol)
    }
}

pub fn solve_speed(
    path: &PathSolution,
    vehicle: &VehicleParams,
    spline: &SplineParams,
    t_f: f64,
    v0: f64,
    vf: f64,
) -> Result<SpeedSolution, PlanError> {
    solve_speed_with(path, vehicle, spline, t_f, v0, vf, &ClarabelSolver::default())
}

pub fn solve_speed_with(
    path: &PathSolution,
    vehicle: &VehicleParams,
    spline: &SplineParams,
    t_f: f64,
    v0: f64,
    vf: f64,
    solver: &dyn ConicSolver,
) -> Result<SpeedSolution, PlanError> {
    let started = Instant::now();
    let built = build_speed_socp(path, vehicle, spline, t_f, v0, vf)?;
    let res = solver.solve(&built.program);
    if res.status != SolveStatus::Optimal {
        return Err(PlanError::from_status(Stage::Speed, res.status));
    }
    let n = spline.profile_segments;
    let d = spline.profile_degree;
    let mut p: Vec<f64> = built.vars.p.iter().map(|&v| res.value(v)).collect();
    let b1 = derivative_matrix(&built.knots, 1)?.matrix;
    let vt = path.v_theta_max;
    p[0] = 0.0;
    p[n] = 1.0;
    p[1] = v0 / vt / b1[(1, 1)];
    p[n - 1] = (vf / vt - b1[(n, n)]) / b1[(n - 1, n)];
    let profile = BSplineCurve::scalar(built.knots, &p)?;

    // tightest window bounds for the snapped control points
    let q1 = profile.vcps(1)?.clone();
    let q2 = profile.vcps(2)?.clone();
    let kappa: Vec<f64> = (0..=n - d)
        .map(|k| (k + 1..=k + d).map(|j| q1[(0, j)]).fold(0.0, f64::max))
        .collect();
    let epsilon: Vec<f64> = (0..=n - d)
        .map(|k| (k + 2..=k + d).map(|j| q2[(0, j)].abs()).fold(0.0, f64::max))
        .collect();
    let h = roughness_matrix(&profile_knots(spline, 1.0)?, 3)?;
    let pv = DVector::from_column_slice(&p);
    let jerk_cost = pv.dot(&(h * &pv)) / t_f.powi(5);
    let sol = SpeedSolution { profile, kappa, epsilon, t_f, jerk_cost, solve_time: started.elapsed() };
    sol.check_invariants(path, vehicle, v0, vf, INVARIANT_TOL)
        .map_err(|failure| PlanError::CertificateViolation { stage: Stage::Speed, failure })?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::socp::SocConstraint;

    #[test]
    fn window_cone_matches_expanded_budget() {
        let mut p = ConicProgram::new();
        let k = p.add_var("kappa").unwrap();
        let e = p.add_var("eps").unwrap();
        let (lhs, rhs) = accel_window_cone(k, e, 2.0, 3.0, 1.0);
        let c = SocConstraint { lhs, rhs };
        // 2κ² + 3ε <= 1
        assert!(c.residual(&[0.5, 0.1]) >= 0.0);
        assert!(c.residual(&[0.5, 0.2]) < 0.0);
        assert!(c.residual(&[0.0, 1.0 / 3.0 - 1e-9]) >= 0.0);
    }
}
