//! Geometric stage: a B-spline path whose control points certify the
//! steering-angle bound and membership in the drivable region.
//!
//! The steering certificate bounds the path curvature through
//! `‖θ''‖ <= ā_θ <= α v_θ − β <= (tanγ̄/L) v_θ² <= (tanγ̄/L)‖θ'‖²`, where the
//! middle step holds because `α² <= 4β tanγ̄/L` makes the quadratic
//! `(tanγ̄/L) v² − α v + β` nonnegative.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Vector2};

use crate::bspline::{derivative_matrix, roughness_factor, BSplineCurve, KnotVector};
use crate::error::{check_le, CertificateFailure, PlanError, Stage};
use crate::scenario::{Region, RegionConstraint, Scenario};
use crate::socp::{AffineExpr, ClarabelSolver, ConicProgram, ConicSolver, SolveStatus, VarId};

/// Relative margin by which inequality constraints are tightened before
/// solving, so that solver round-off cannot push the certificates over.
pub const BACKOFF: f64 = 1e-6;

/// Tolerance of the post-solve invariant check.
pub const INVARIANT_TOL: f64 = 1e-6;

/// Fixed parameters of the convex steering relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationParams {
    pub alpha: f64,
    /// Unit vector along which `θ'` is bounded from below.
    pub direction: Vector2<f64>,
}

impl RelaxationParams {
    /// Validates a caller-provided pair and normalizes the direction.
    pub fn new(alpha: f64, direction: Vector2<f64>) -> Result<Self, PlanError> {
        let n = direction.norm();
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PlanError::InvalidInput(format!("alpha = {alpha} must be positive")));
        }
        if !(n > 0.0 && n.is_finite()) {
            return Err(PlanError::InvalidInput("relaxation direction must be nonzero".into()));
        }
        Ok(Self { alpha, direction: direction / n })
    }
}

/// `α = 2 (tanγ̄/L) ‖r_f − r_0‖`, `r̂ = (r_f − r_0)/‖r_f − r_0‖`.
pub fn default_relaxation_params(scenario: &Scenario) -> Result<RelaxationParams, PlanError> {
    let delta = scenario.goal.position() - scenario.initial.position();
    let dist = delta.norm();
    if !(dist > 0.0) {
        return Err(PlanError::Degenerate("initial and final positions coincide".into()));
    }
    Ok(RelaxationParams { alpha: 2.0 * scenario.vehicle.curvature_limit() * dist, direction: delta / dist })
}

/// `‖(2α, 4kβ − 1)‖ <= 4kβ + 1` with `k = tanγ̄/L`, i.e. `α² <= 4kβ`.
pub fn steering_relaxation_cone(beta: VarId, alpha: f64, curvature_limit: f64) -> (Vec<AffineExpr>, AffineExpr) {
    let kb = AffineExpr::term(beta, 4.0 * curvature_limit);
    (vec![AffineExpr::constant(2.0 * alpha), kb.clone() - 1.0], kb + 1.0)
}

/// Handles of the decision variables of the path program.
#[derive(Debug, Clone)]
pub struct PathVars {
    pub beta: VarId,
    pub v_theta_max: VarId,
    pub v_theta_min: VarId,
    pub a_theta_max: VarId,
    /// `(x, y)` of each control point `Θ_j`.
    pub theta: Vec<[VarId; 2]>,
    pub smoothness: VarId,
}

/// The assembled path program with everything needed to read a solution.
#[derive(Debug, Clone)]
pub struct PathProgram {
    pub program: ConicProgram,
    pub vars: PathVars,
    pub knots: KnotVector,
    pub relaxation: RelaxationParams,
    pub curvature_limit: f64,
}

/// `Σ_i Θ_{i,c} B[i, j]`.
fn vcp_expr(b: &DMatrix<f64>, j: usize, theta: &[[VarId; 2]], c: usize) -> AffineExpr {
    let mut e = AffineExpr::zero();
    for (i, v) in theta.iter().enumerate() {
        let w = b[(i, j)];
        if w != 0.0 {
            e.add_term(v[c], w);
        }
    }
    e
}

fn region_rows(c: &RegionConstraint, p: [AffineExpr; 2], backoff: f64) -> (Vec<AffineExpr>, AffineExpr) {
    let [x, y] = p;
    match *c {
        RegionConstraint::HalfSpace { normal, offset } => {
            let n = normal.norm();
            (Vec::new(), AffineExpr::constant(offset - backoff * n) - x * normal.x - y * normal.y)
        }
        RegionConstraint::Disc { center, radius } => {
            (vec![x - center.x, y - center.y], AffineExpr::constant(radius - backoff))
        }
    }
}

pub fn build_path_socp(scenario: &Scenario, relax: &RelaxationParams) -> Result<PathProgram, PlanError> {
    scenario.validate()?;
    let sp = scenario.spline;
    let n = sp.path_segments;
    let knots = KnotVector::clamped_uniform(sp.path_degree, n + 1, 0.0, 1.0)?;
    let b1 = derivative_matrix(&knots, 1)?.matrix;
    let b2 = derivative_matrix(&knots, 2)?.matrix;
    let k = scenario.vehicle.curvature_limit();
    let r0 = scenario.initial.position();
    let rf = scenario.goal.position();
    let dist = (rf - r0).norm();
    let pos_scale = 1.0 + r0.norm().max(rf.norm());
    let v_scale = dist.max(1.0);
    let a_scale = (k * dist * dist).max(1.0);

    let mut p = ConicProgram::new();
    let beta = p.add_var("beta")?;
    let v_theta_max = p.add_var("v_theta_max")?;
    let v_theta_min = p.add_var("v_theta_min")?;
    let a_theta_max = p.add_var("a_theta_max")?;
    let theta = (0..=n)
        .map(|j| Ok([p.add_var(format!("theta[{j}].x"))?, p.add_var(format!("theta[{j}].y"))?]))
        .collect::<Result<Vec<_>, PlanError>>()?;

    // endpoint positions and tangents
    for c in 0..2 {
        p.add_eq(AffineExpr::from(theta[0][c]) - r0[c])?;
        p.add_eq(AffineExpr::from(theta[n][c]) - rf[c])?;
    }
    let (s0, c0) = scenario.initial.psi.sin_cos();
    let (sf, cf) = scenario.goal.psi.sin_cos();
    for (c, (u0, uf)) in [(c0, cf), (s0, sf)].into_iter().enumerate() {
        p.add_eq(vcp_expr(&b1, 1, &theta, c) - AffineExpr::term(v_theta_max, u0))?;
        p.add_eq(vcp_expr(&b1, n, &theta, c) - AffineExpr::term(v_theta_max, uf))?;
    }

    let rhat = relax.direction;
    for j in 1..=n {
        let d1 = [vcp_expr(&b1, j, &theta, 0), vcp_expr(&b1, j, &theta, 1)];
        p.add_cone(d1.to_vec(), AffineExpr::from(v_theta_max))?;
        let proj = d1[0].clone() * rhat.x + d1[1].clone() * rhat.y;
        p.add_nonneg(proj - v_theta_min - BACKOFF * v_scale)?;
    }
    for j in 2..=n {
        let d2 = vec![vcp_expr(&b2, j, &theta, 0), vcp_expr(&b2, j, &theta, 1)];
        p.add_cone(d2, AffineExpr::from(a_theta_max) - BACKOFF * a_scale)?;
    }
    let (lhs, rhs) = steering_relaxation_cone(beta, relax.alpha, k);
    p.add_cone(lhs, rhs)?;
    p.add_nonneg(
        AffineExpr::term(v_theta_min, relax.alpha) - beta - a_theta_max - BACKOFF * a_scale,
    )?;
    p.add_nonneg(AffineExpr::from(beta))?;
    p.add_nonneg(AffineExpr::from(v_theta_min))?;

    // drivable region; the fixed endpoints are checked by scenario validation
    for j in 1..n {
        for c in &scenario.region.constraints {
            let backoff = if j == 1 || j + 1 == n { 0.0 } else { BACKOFF * pos_scale };
            let (lhs, rhs) =
                region_rows(c, [AffineExpr::from(theta[j][0]), AffineExpr::from(theta[j][1])], backoff);
            p.add_cone(lhs, rhs)?;
        }
    }

    // ∫‖θ'''‖² = Σ_c ‖F Θ_c‖²
    let f = roughness_factor(&knots, 3)?;
    let mut rows = Vec::with_capacity(2 * (n + 1));
    for c in 0..2 {
        for i in 0..=n {
            let mut e = AffineExpr::zero();
            for (j, v) in theta.iter().enumerate() {
                if f[(i, j)] != 0.0 {
                    e.add_term(v[c], f[(i, j)]);
                }
            }
            rows.push(e);
        }
    }
    let smoothness = p.add_quadratic_cost("smoothness", &rows, 1.0)?;
    p.add_objective(v_theta_max, 1.0);
    p.add_objective(v_theta_min, -1.0);
    p.add_objective(a_theta_max, 1.0);

    Ok(PathProgram {
        program: p,
        vars: PathVars { beta, v_theta_max, v_theta_min, a_theta_max, theta, smoothness },
        knots,
        relaxation: *relax,
        curvature_limit: k,
    })
}

/// A certified path `θ: [0, 1] → R²`.
#[derive(Debug, Clone)]
pub struct PathSolution {
    pub path: BSplineCurve,
    /// `v̄_θ`, upper bound on `‖θ'‖`.
    pub v_theta_max: f64,
    /// `v_θ`, lower bound on `r̂·θ'`.
    pub v_theta_min: f64,
    /// `ā_θ`, upper bound on `‖θ''‖`.
    pub a_theta_max: f64,
    pub beta: f64,
    pub relaxation: RelaxationParams,
    /// `tanγ̄/L` the certificate was built for.
    pub curvature_limit: f64,
    /// `∫‖θ'''‖² ds`.
    pub smoothness: f64,
    pub objective: f64,
    pub solve_time: Duration,
}

impl PathSolution {
    /// Control points `Θ_j` as `(x, y)` pairs.
    pub fn control_point(&self, j: usize) -> Vector2<f64> {
        let c = self.path.control_points().column(j);
        Vector2::new(c[0], c[1])
    }

    pub fn last_index(&self) -> usize {
        self.path.knots().last_index()
    }

    fn vcp(&self, order: usize, j: usize) -> Vector2<f64> {
        let c = self.path.vcps(order).expect("order within degree").column(j);
        Vector2::new(c[0], c[1])
    }

    /// Steering certificate: the direction lower bound, the second-derivative
    /// bound, the discriminant cone and the linking inequality.
    pub fn check_steering_certificate(&self, tol: f64) -> Result<(), CertificateFailure> {
        let n = self.last_index();
        let rhat = self.relaxation.direction;
        for j in 1..=n {
            check_le("path direction lower bound", Some(j), self.v_theta_min, rhat.dot(&self.vcp(1, j)), tol)?;
        }
        self.check_second_derivative_bound(tol)?;
        let alpha = self.relaxation.alpha;
        check_le("curvature discriminant", None, alpha * alpha, 4.0 * self.beta * self.curvature_limit, tol)?;
        check_le("relaxation link", None, self.a_theta_max + self.beta, alpha * self.v_theta_min, tol)?;
        check_le("nonnegative beta", None, -self.beta, 0.0, tol)?;
        check_le("nonnegative speed floor", None, -self.v_theta_min, 0.0, tol)
    }

    /// `‖Θ^(2)_j‖ <= ā_θ`.
    pub fn check_second_derivative_bound(&self, tol: f64) -> Result<(), CertificateFailure> {
        for j in 2..=self.last_index() {
            check_le("path acceleration bound", Some(j), self.vcp(2, j).norm(), self.a_theta_max, tol)?;
        }
        Ok(())
    }

    /// Every control point lies in the region.
    pub fn check_region_certificate(&self, region: &Region, tol: f64) -> Result<(), CertificateFailure> {
        for j in 0..=self.last_index() {
            let p = self.control_point(j);
            let scale = 1.0 + p.norm();
            let m = region.margin(&p);
            if m < -tol * scale {
                return Err(CertificateFailure { condition: "drivable region", index: Some(j), excess: -m });
            }
        }
        Ok(())
    }

    /// `‖Θ^(1)_j‖ <= v̄_θ`, which the speed certificate relies on.
    pub fn check_tangent_bound(&self, tol: f64) -> Result<(), CertificateFailure> {
        for j in 1..=self.last_index() {
            check_le("path tangent bound", Some(j), self.vcp(1, j).norm(), self.v_theta_max, tol)?;
        }
        Ok(())
    }

    /// Endpoint positions and tangents.
    pub fn check_endpoints(&self, scenario: &Scenario, tol: f64) -> Result<(), CertificateFailure> {
        let n = self.last_index();
        let checks = [
            (0, 0, scenario.initial.position()),
            (0, n, scenario.goal.position()),
            (1, 1, Vector2::new(scenario.initial.psi.cos(), scenario.initial.psi.sin()) * self.v_theta_max),
            (1, n, Vector2::new(scenario.goal.psi.cos(), scenario.goal.psi.sin()) * self.v_theta_max),
        ];
        for (order, j, want) in checks {
            let err = (self.vcp(order, j) - want).norm();
            check_le("path endpoint condition", Some(j), err, 0.0, tol * (1.0 + want.norm()))?;
        }
        Ok(())
    }

    pub fn check_invariants(&self, scenario: &Scenario, tol: f64) -> Result<(), CertificateFailure> {
        self.check_endpoints(scenario, tol)?;
        self.check_steering_certificate(tol)?;
        self.check_tangent_bound(tol)?;
        self.check_region_certificate(&scenario.region, tol)
    }
}

/// Reads the solver output, re-imposing the endpoint equalities exactly.
fn extract(built: &PathProgram, scenario: &Scenario, x: &[f64]) -> Result<DMatrix<f64>, PlanError> {
    let n = built.knots.last_index();
    let v = &built.vars;
    let mut ctrl = DMatrix::<f64>::zeros(2, n + 1);
    for (j, ids) in v.theta.iter().enumerate() {
        ctrl[(0, j)] = x[ids[0].0];
        ctrl[(1, j)] = x[ids[1].0];
    }
    let vmax = x[v.v_theta_max.0];
    let r0 = scenario.initial.position();
    let rf = scenario.goal.position();
    let u0 = Vector2::new(scenario.initial.psi.cos(), scenario.initial.psi.sin()) * vmax;
    let uf = Vector2::new(scenario.goal.psi.cos(), scenario.goal.psi.sin()) * vmax;
    let b1 = derivative_matrix(&built.knots, 1)?.matrix;
    // Θ^(1)_1 = b[0,1] Θ_0 + b[1,1] Θ_1 and Θ^(1)_N = b[N-1,N] Θ_{N-1} + b[N,N] Θ_N
    let first = (u0 - r0 * b1[(0, 1)]) / b1[(1, 1)];
    let last = (uf - rf * b1[(n, n)]) / b1[(n - 1, n)];
    for c in 0..2 {
        ctrl[(c, 0)] = r0[c];
        ctrl[(c, n)] = rf[c];
        ctrl[(c, 1)] = first[c];
        ctrl[(c, n - 1)] = last[c];
    }
    Ok(ctrl)
}

pub fn solve_path(scenario: &Scenario) -> Result<PathSolution, PlanError> {
    solve_path_with(scenario, None, &ClarabelSolver::default())
}

/// Solves the path program with optional relaxation overrides and backend.
pub fn solve_path_with(
    scenario: &Scenario,
    relax: Option<RelaxationParams>,
    solver: &dyn ConicSolver,
) -> Result<PathSolution, PlanError> {
    let started = Instant::now();
    let relax = match relax {
        Some(r) => r,
        None => default_relaxation_params(scenario)?,
    };
    let built = build_path_socp(scenario, &relax)?;
    let res = solver.solve(&built.program);
    if res.status != SolveStatus::Optimal {
        return Err(PlanError::from_status(Stage::Path, res.status));
    }
    let ctrl = extract(&built, scenario, &res.x)?;
    let path = BSplineCurve::new(built.knots.clone(), ctrl)?;
    let v = &built.vars;
    let sol = PathSolution {
        path,
        v_theta_max: res.value(v.v_theta_max),
        v_theta_min: res.value(v.v_theta_min).max(0.0),
        a_theta_max: res.value(v.a_theta_max),
        beta: res.value(v.beta).max(0.0),
        relaxation: relax,
        curvature_limit: built.curvature_limit,
        smoothness: res.value(v.smoothness),
        objective: res.objective,
        solve_time: started.elapsed(),
    };
    sol.check_invariants(scenario, INVARIANT_TOL)
        .map_err(|failure| PlanError::CertificateViolation { stage: Stage::Path, failure })?;
    Ok(sol)
}
