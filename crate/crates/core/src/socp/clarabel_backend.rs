use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{AffineExpr, ConicProgram, ConicSolver, SolveResult, SolveStatus, FEAS_TOL};

/// Reference backend built on the Clarabel interior-point solver.
///
/// Clarabel's stopping tolerances act on the equilibrated problem, so a
/// tight gap tolerance can leave a larger primal residual in the original
/// units. The solve starts at `tol` and loosens it tenfold, at most
/// `fallbacks` times, until the result meets [`FEAS_TOL`] in absolute terms.
/// If no attempt does, the tightest attempt meeting it relative to the cone
/// magnitudes is accepted.
#[derive(Debug, Clone)]
pub struct ClarabelSolver {
    pub max_iter: u32,
    pub tol: f64,
    pub fallbacks: u32,
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-9, fallbacks: 2, verbose: false }
    }
}

/// Triplet builder for `A x + s = b`.
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends the slack row `s = expr(x)`, i.e. `-expr.terms · x + s = expr.constant`.
    fn push(&mut self, e: &AffineExpr) {
        let row = self.b.len();
        for &(j, c) in &e.terms {
            self.i.push(row);
            self.j.push(j);
            self.v.push(-c);
        }
        self.b.push(e.constant);
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, program: &ConicProgram) -> SolveResult {
        let started = Instant::now();
        let n = program.num_vars();
        let fail = |status| SolveResult {
            status,
            x: vec![f64::NAN; n],
            objective: f64::NAN,
            iterations: 0,
            solve_time: started.elapsed(),
        };
        if n == 0 {
            return fail(SolveStatus::NumericalFailure);
        }

        let mut rows = Rows { i: Vec::new(), j: Vec::new(), v: Vec::new(), b: Vec::new() };
        let mut cones = Vec::new();

        // equalities: expr(x) = 0
        for e in program.equalities() {
            rows.push(e);
        }
        if !program.equalities().is_empty() {
            cones.push(SupportedConeT::ZeroConeT(program.equalities().len()));
        }

        let (linear, socs): (Vec<_>, Vec<_>) = program.cones().iter().partition(|c| c.lhs.is_empty());
        let mut n_linear = 0;
        for c in linear {
            if c.rhs.terms.is_empty() {
                // constant inequality: drop if satisfied
                if c.rhs.constant < 0.0 {
                    return fail(SolveStatus::Infeasible);
                }
                continue;
            }
            rows.push(&c.rhs);
            n_linear += 1;
        }
        if n_linear > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_linear));
        }
        for c in socs {
            rows.push(&c.rhs);
            for e in &c.lhs {
                rows.push(e);
            }
            cones.push(SupportedConeT::SecondOrderConeT(c.lhs.len() + 1));
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let p = CscMatrix::zeros((n, n));
        let mut iterations = 0;
        let mut tol = self.tol;
        let mut scaled_ok: Option<Vec<f64>> = None;
        let mut last = (SolveStatus::NumericalFailure, vec![f64::NAN; n]);
        for _ in 0..=self.fallbacks {
            let settings = DefaultSettings {
                max_iter: self.max_iter,
                verbose: self.verbose,
                tol_gap_abs: tol,
                tol_gap_rel: tol,
                tol_feas: tol,
                ..DefaultSettings::default()
            };
            let mut solver = match DefaultSolver::new(&p, program.objective(), &a, &rows.b, &cones, settings) {
                Ok(s) => s,
                Err(_) => return fail(SolveStatus::NumericalFailure),
            };
            solver.solve();
            let sol = &solver.solution;
            iterations += sol.iterations;
            let status = match sol.status {
                SolverStatus::Solved | SolverStatus::AlmostSolved => {
                    if program.is_feasible(&sol.x, FEAS_TOL) {
                        SolveStatus::Optimal
                    } else {
                        if scaled_ok.is_none() && program.is_feasible_scaled(&sol.x, FEAS_TOL) {
                            scaled_ok = Some(sol.x.clone());
                        }
                        SolveStatus::NumericalFailure
                    }
                }
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
                SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
                _ => SolveStatus::NumericalFailure,
            };
            last = (status, sol.x.clone());
            if status != SolveStatus::NumericalFailure {
                break;
            }
            tol *= 10.0;
        }
        let (status, x) = match (last, scaled_ok) {
            ((SolveStatus::NumericalFailure, _), Some(x)) => (SolveStatus::Optimal, x),
            (last, _) => last,
        };
        SolveResult {
            status,
            objective: program.objective_value(&x),
            x,
            iterations,
            solve_time: started.elapsed(),
        }
    }
}
