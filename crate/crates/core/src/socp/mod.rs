//! Second-order cone programs in the standard form
//!
//! ```text
//! minimize    f^T x
//! subject to  ‖A_i x + b_i‖₂ <= c_i^T x + d_i
//!             E x = g
//! ```
//!
//! Constraints are stored as sparse affine expressions. Every variable has a
//! unique name so that solver columns can be mapped back to planner
//! quantities and so that programs survive the text [`dump`] format.

mod clarabel_backend;
pub mod dump;

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::time::Duration;

use nalgebra::DMatrix;
use thiserror::Error;

pub use clarabel_backend::ClarabelSolver;

/// Feasibility tolerance of the solve contract.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SocpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable name {0:?} is already registered")]
    DuplicateName(String),
    #[error("variable name {0:?} is empty or contains whitespace")]
    InvalidName(String),
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("malformed program dump at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstraintId(pub usize);

/// Sparse affine expression `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        Self { terms: vec![(v.0, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    /// Merges repeated indices and drops exact zeros.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self { terms: out, constant: self.constant }
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

impl From<VarId> for AffineExpr {
    fn from(v: VarId) -> Self {
        Self::term(v, 1.0)
    }
}

impl From<f64> for AffineExpr {
    fn from(c: f64) -> Self {
        Self::constant(c)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Add<f64> for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: f64) -> AffineExpr {
        self.constant += rhs;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + (-rhs)
    }
}

impl Sub<f64> for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: f64) -> AffineExpr {
        self + (-rhs)
    }
}

impl Add<VarId> for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: VarId) -> AffineExpr {
        self.terms.push((rhs.0, 1.0));
        self
    }
}

impl Sub<VarId> for AffineExpr {
    type Output = AffineExpr;
    fn sub(mut self, rhs: VarId) -> AffineExpr {
        self.terms.push((rhs.0, -1.0));
        self
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1.0
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(mut self, k: f64) -> AffineExpr {
        self.terms.iter_mut().for_each(|t| t.1 *= k);
        self.constant *= k;
        self
    }
}

/// `‖lhs‖₂ <= rhs`. An empty `lhs` is the linear inequality `rhs >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub lhs: Vec<AffineExpr>,
    pub rhs: AffineExpr,
}

impl SocConstraint {
    /// `rhs(x) − ‖lhs(x)‖`, nonnegative when satisfied.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let norm = self.lhs.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        self.rhs.eval(x) - norm
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    names: Vec<String>,
    index: HashMap<String, usize>,
    objective: Vec<f64>,
    objective_offset: f64,
    cones: Vec<SocConstraint>,
    equalities: Vec<AffineExpr>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> Result<VarId, SocpError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(SocpError::InvalidName(name));
        }
        if self.index.contains_key(&name) {
            return Err(SocpError::DuplicateName(name));
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.objective.push(0.0);
        Ok(VarId(id))
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied().map(VarId)
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v.0]
    }

    pub fn var_names(&self) -> &[String] {
        &self.names
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    pub fn cones(&self) -> &[SocConstraint] {
        &self.cones
    }

    pub fn equalities(&self) -> &[AffineExpr] {
        &self.equalities
    }

    /// Adds `coef` to the objective coefficient of `v`.
    pub fn add_objective(&mut self, v: VarId, coef: f64) {
        self.objective[v.0] += coef;
    }

    pub fn add_objective_offset(&mut self, c: f64) {
        self.objective_offset += c;
    }

    fn check_expr(&self, e: &AffineExpr) -> Result<(), SocpError> {
        match e.max_index() {
            Some(i) if i >= self.num_vars() => Err(SocpError::UnknownVariable(i)),
            _ => Ok(()),
        }
    }

    /// `‖lhs‖ <= rhs` from affine expressions.
    pub fn add_cone(&mut self, lhs: Vec<AffineExpr>, rhs: AffineExpr) -> Result<ConstraintId, SocpError> {
        for e in lhs.iter().chain(std::iter::once(&rhs)) {
            self.check_expr(e)?;
        }
        let lhs = lhs.into_iter().map(AffineExpr::compact).collect();
        self.cones.push(SocConstraint { lhs, rhs: rhs.compact() });
        Ok(ConstraintId(self.cones.len() - 1))
    }

    /// `‖A x + b‖ <= c^T x + d` from dense data, `A` of shape `(n_i − 1) × n`.
    pub fn add_soc(&mut self, a: &DMatrix<f64>, b: &[f64], c: &[f64], d: f64) -> Result<ConstraintId, SocpError> {
        let n = self.num_vars();
        if a.nrows() != b.len() || (a.nrows() > 0 && a.ncols() != n) || c.len() != n {
            return Err(SocpError::Dimension(format!(
                "A is {}x{}, b has {}, c has {}, program has {n} variables",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        let dense = |row: &mut dyn Iterator<Item = f64>, constant: f64| AffineExpr {
            terms: row.enumerate().filter(|t| t.1 != 0.0).collect(),
            constant,
        };
        let lhs = (0..a.nrows()).map(|i| dense(&mut a.row(i).iter().copied(), b[i])).collect();
        let rhs = dense(&mut c.iter().copied(), d);
        self.add_cone(lhs, rhs)
    }

    /// `expr >= 0`.
    pub fn add_nonneg(&mut self, expr: AffineExpr) -> Result<ConstraintId, SocpError> {
        self.add_cone(Vec::new(), expr)
    }

    /// `lhs <= rhs`.
    pub fn add_le(&mut self, lhs: AffineExpr, rhs: AffineExpr) -> Result<ConstraintId, SocpError> {
        self.add_nonneg(rhs - lhs)
    }

    /// `expr == 0`.
    pub fn add_eq(&mut self, expr: AffineExpr) -> Result<ConstraintId, SocpError> {
        self.check_expr(&expr)?;
        self.equalities.push(expr.compact());
        Ok(ConstraintId(self.equalities.len() - 1))
    }

    /// Rows of `E x = g` from dense data.
    pub fn add_equalities(&mut self, e: &DMatrix<f64>, g: &[f64]) -> Result<(), SocpError> {
        if e.nrows() != g.len() || e.ncols() != self.num_vars() {
            return Err(SocpError::Dimension(format!("E is {}x{}, g has {}", e.nrows(), e.ncols(), g.len())));
        }
        for i in 0..e.nrows() {
            let terms = e.row(i).iter().copied().enumerate().filter(|t| t.1 != 0.0).collect();
            self.add_eq(AffineExpr { terms, constant: -g[i] })?;
        }
        Ok(())
    }

    /// `w >= ‖F x‖²` through the cone `‖(2 F x, w − 1)‖ <= w + 1`.
    pub fn add_square_epigraph(&mut self, rows: &[AffineExpr], w: VarId) -> Result<ConstraintId, SocpError> {
        if w.0 >= self.num_vars() {
            return Err(SocpError::UnknownVariable(w.0));
        }
        let mut lhs: Vec<AffineExpr> = rows.iter().map(|r| r.clone() * 2.0).collect();
        lhs.push(AffineExpr::from(w) - 1.0);
        self.add_cone(lhs, AffineExpr::from(w) + 1.0)
    }

    /// Dense-matrix form of [`add_square_epigraph`](Self::add_square_epigraph).
    pub fn add_square_epigraph_dense(&mut self, f: &DMatrix<f64>, w: VarId) -> Result<ConstraintId, SocpError> {
        if f.ncols() != self.num_vars() {
            return Err(SocpError::Dimension(format!("F has {} columns, program has {}", f.ncols(), self.num_vars())));
        }
        let rows: Vec<AffineExpr> = (0..f.nrows())
            .map(|i| AffineExpr { terms: f.row(i).iter().copied().enumerate().filter(|t| t.1 != 0.0).collect(), constant: 0.0 })
            .collect();
        self.add_square_epigraph(&rows, w)
    }

    /// New variable `name` bounding `‖rows‖²`, entered in the objective with
    /// coefficient `weight`.
    pub fn add_quadratic_cost(&mut self, name: &str, rows: &[AffineExpr], weight: f64) -> Result<VarId, SocpError> {
        let w = self.add_var(name)?;
        self.add_square_epigraph(rows, w)?;
        self.add_objective(w, weight);
        Ok(w)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(f, x)| f * x).sum::<f64>() + self.objective_offset
    }

    /// Smallest `rhs − ‖lhs‖` over all cones (`+∞` without cones).
    pub fn min_cone_residual(&self, x: &[f64]) -> f64 {
        self.cones.iter().map(|c| c.residual(x)).fold(f64::INFINITY, f64::min)
    }

    /// `‖E x − g‖_∞`.
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        self.equalities.iter().map(|e| e.eval(x).abs()).fold(0.0, f64::max)
    }

    /// Every cone residual at least `-tol` and every equality residual at
    /// most `tol`, in absolute terms.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.iter().all(|v| v.is_finite()) && self.min_cone_residual(x) >= -tol && self.equality_residual(x) <= tol
    }

    /// Like [`is_feasible`](Self::is_feasible) with each residual measured
    /// against `1 + |rhs|` (cones) or `1 + |constant|` (equalities); the
    /// contract for programs whose values are far from unit scale.
    pub fn is_feasible_scaled(&self, x: &[f64], tol: f64) -> bool {
        let cones_ok = self.cones.iter().all(|c| c.residual(x) >= -tol * (1.0 + c.rhs.eval(x).abs()));
        let eq_ok = self.equalities.iter().all(|e| e.eval(x).abs() <= tol * (1.0 + e.constant.abs()));
        x.iter().all(|v| v.is_finite()) && cones_ok && eq_ok
    }

    pub fn solve(&self) -> SolveResult {
        ClarabelSolver::default().solve(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub solve_time: Duration,
}

impl SolveResult {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// A conic solver backend.
pub trait ConicSolver {
    /// Never panics on bad numerics; failures are reported through the status.
    fn solve(&self, program: &ConicProgram) -> SolveResult;
}

pub fn solve(program: &ConicProgram) -> SolveResult {
    program.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_cone_is_linear_inequality() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x").unwrap();
        // x <= 2 as ‖∅‖ <= 2 - x, maximize x
        p.add_soc(&DMatrix::zeros(0, 1), &[], &[-1.0], 2.0).unwrap();
        p.add_objective(x, -1.0);
        let r = p.solve();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.value(x), 2.0, epsilon = 1e-7);
    }

    #[test]
    fn box_as_two_linear_cones() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x").unwrap();
        let y = p.add_var("y").unwrap();
        for v in [x, y] {
            p.add_le(AffineExpr::from(v), AffineExpr::constant(3.0)).unwrap();
            p.add_le(AffineExpr::from(v) * -1.0, AffineExpr::constant(3.0)).unwrap();
        }
        p.add_objective(x, 1.0);
        p.add_objective(y, -2.0);
        let r = p.solve();
        assert_relative_eq!(r.value(x), -3.0, epsilon = 1e-7);
        assert_relative_eq!(r.value(y), 3.0, epsilon = 1e-7);
        assert_relative_eq!(r.objective, -9.0, epsilon = 1e-7);
    }

    #[test]
    fn unit_disc_linear_objective() {
        let mut p = ConicProgram::new();
        p.add_var("x0").unwrap();
        p.add_var("x1").unwrap();
        p.add_soc(&DMatrix::identity(2, 2), &[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        p.add_objective(VarId(0), -1.0);
        let r = p.solve();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-7);
        assert!(r.x[1].abs() < 1e-7);
        assert_relative_eq!(r.objective, -1.0, epsilon = 1e-7);
    }

    #[test]
    fn infeasible_cone() {
        let mut p = ConicProgram::new();
        p.add_var("x0").unwrap();
        p.add_var("x1").unwrap();
        p.add_soc(&DMatrix::identity(2, 2), &[0.0, 0.0], &[0.0, 0.0], -1.0).unwrap();
        assert_eq!(p.solve().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_program() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x").unwrap();
        p.add_nonneg(AffineExpr::from(x)).unwrap();
        p.add_objective(x, -1.0);
        assert_eq!(p.solve().status, SolveStatus::Unbounded);
    }

    #[test]
    fn square_epigraph_of_fixed_value() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x").unwrap();
        p.add_eq(AffineExpr::from(x) - 3.0).unwrap();
        let w = p.add_quadratic_cost("w", &[AffineExpr::from(x)], 1.0).unwrap();
        let r = p.solve();
        assert_relative_eq!(r.value(w), 9.0, epsilon = 1e-6);

        let mut p = ConicProgram::new();
        let x = p.add_var("x").unwrap();
        p.add_eq(AffineExpr::from(x)).unwrap();
        let w = p.add_quadratic_cost("w", &[AffineExpr::from(x)], 1.0).unwrap();
        assert!(p.solve().value(w).abs() < 1e-6);
    }

    #[test]
    fn two_segment_time_embedding() {
        // b fixed at 1 on three nodes; minimize 2Δs Σ d_i with c_i² <= b_i
        // and (c_i + c_{i+1}) d_i >= 1, so d_i = 1/2 and the total is 1.
        let ds = 0.5;
        let mut p = ConicProgram::new();
        let b: Vec<VarId> = (0..3).map(|i| p.add_var(format!("b{i}")).unwrap()).collect();
        let c: Vec<VarId> = (0..3).map(|i| p.add_var(format!("c{i}")).unwrap()).collect();
        let d: Vec<VarId> = (0..2).map(|i| p.add_var(format!("d{i}")).unwrap()).collect();
        for i in 0..3 {
            p.add_eq(AffineExpr::from(b[i]) - 1.0).unwrap();
            p.add_cone(
                vec![AffineExpr::term(c[i], 2.0), AffineExpr::from(b[i]) - 1.0],
                AffineExpr::from(b[i]) + 1.0,
            )
            .unwrap();
        }
        for i in 0..2 {
            let cbar = AffineExpr::from(c[i]) + AffineExpr::from(c[i + 1]);
            p.add_cone(vec![AffineExpr::constant(2.0), cbar.clone() - AffineExpr::from(d[i])], cbar + AffineExpr::from(d[i]))
                .unwrap();
            p.add_objective(d[i], 2.0 * ds);
        }
        let r = p.solve();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.value(d[0]), 0.5, epsilon = 1e-6);
        assert_relative_eq!(r.value(d[1]), 0.5, epsilon = 1e-6);
        assert_relative_eq!(r.objective, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn registry_and_dimension_errors() {
        let mut p = ConicProgram::new();
        p.add_var("a").unwrap();
        assert_eq!(p.add_var("a"), Err(SocpError::DuplicateName("a".into())));
        assert!(matches!(p.add_var("a b"), Err(SocpError::InvalidName(_))));
        assert!(matches!(p.add_soc(&DMatrix::zeros(2, 1), &[0.0], &[0.0], 0.0), Err(SocpError::Dimension(_))));
        assert!(matches!(p.add_soc(&DMatrix::zeros(1, 1), &[0.0], &[0.0, 1.0], 0.0), Err(SocpError::Dimension(_))));
        assert_eq!(p.add_nonneg(AffineExpr::term(VarId(4), 1.0)), Err(SocpError::UnknownVariable(4)));
        assert_eq!(p.var("a"), Some(VarId(0)));
        assert_eq!(p.var_name(VarId(0)), "a");
    }
}
