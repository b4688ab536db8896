mod common;

use std::collections::HashSet;

use flatsocp::path::{build_path_socp, default_relaxation_params, solve_path};
use flatsocp::socp::dump::{from_text, to_text};
use flatsocp::socp::{AffineExpr, ConicProgram, SolveStatus, FEAS_TOL};
use flatsocp::speed::build_speed_socp;
use flatsocp::time::{build_time_socp, solve_time};
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::load;

/// The three planner programs for a bundled scenario.
fn planner_programs(name: &str) -> Vec<(&'static str, ConicProgram)> {
    let s = load(name);
    let relax = default_relaxation_params(&s).unwrap();
    let path_prog = build_path_socp(&s, &relax).unwrap().program;
    let path = solve_path(&s).unwrap();
    let time_prog = build_time_socp(&path, &s).unwrap().program;
    // Fixed endpoint speeds make much longer horizons infeasible; use the
    // duration the pipeline settles on.
    let t_f = flatsocp::plan(&s, &flatsocp::PlanOptions::default()).unwrap().speed.t_f;
    let speed_prog = build_speed_socp(&path, &s.vehicle, &s.spline, t_f, s.initial.v, s.goal.v).unwrap().program;
    vec![("path", path_prog), ("time", time_prog), ("speed", speed_prog)]
}

#[test]
fn planner_programs_meet_the_solve_contract() {
    for name in ["example1.json", "example2.json"] {
        for (stage, p) in planner_programs(name) {
            let r = p.solve();
            assert_eq!(r.status, SolveStatus::Optimal, "{name} {stage}");
            for (i, c) in p.cones().iter().enumerate() {
                let scale = 1.0 + c.rhs.eval(&r.x).abs();
                assert!(c.residual(&r.x) >= -FEAS_TOL * scale, "{name} {stage}: cone {i} residual {}", c.residual(&r.x));
            }
            for (i, e) in p.equalities().iter().enumerate() {
                assert!(e.eval(&r.x).abs() <= FEAS_TOL * (1.0 + e.constant.abs()), "{name} {stage}: equality {i}");
            }
            assert!((p.objective_value(&r.x) - r.objective).abs() <= 1e-6 * (1.0 + r.objective.abs()));
        }
    }
}

#[test]
fn registry_is_a_bijection_onto_columns() {
    for (stage, p) in planner_programs("example2.json") {
        let names = p.var_names();
        assert_eq!(names.len(), p.num_vars(), "{stage}");
        assert_eq!(names.iter().collect::<HashSet<_>>().len(), names.len(), "{stage}: duplicate names");
        for (i, n) in names.iter().enumerate() {
            assert_eq!(p.var(n).map(|v| v.0), Some(i), "{stage}: {n}");
        }
    }
}

#[test]
fn dumped_programs_reload_and_solve_identically() {
    for name in ["example1.json", "example2.json"] {
        for (stage, p) in planner_programs(name) {
            let text = to_text(&p);
            let back = from_text(&text).unwrap();
            assert_eq!(back, p, "{name} {stage}: reload differs");
            let (a, b) = (p.solve(), back.solve());
            assert_eq!(a.status, b.status);
            assert!((a.objective - b.objective).abs() <= 1e-9 * (1.0 + a.objective.abs()), "{name} {stage}");
        }
    }
}

#[test]
fn repeated_solves_are_deterministic() {
    for (stage, p) in planner_programs("example2.json") {
        let first = p.solve();
        for _ in 0..3 {
            let again = p.solve();
            assert_eq!(again.status, first.status, "{stage}");
            assert!((again.objective - first.objective).abs() <= 1e-6 * (1.0 + first.objective.abs()), "{stage}");
        }
    }
}

#[test]
fn time_embedding_cones_hold_at_the_solution() {
    for name in ["example1.json", "example2.json"] {
        let s = load(name);
        let sol = solve_time(&solve_path(&s).unwrap(), &s).unwrap();
        for i in 0..=sol.n_segments {
            // b_0 and b_N are snapped to the endpoint speeds after solving.
            assert!(sol.b[i] >= sol.c[i] * sol.c[i] - FEAS_TOL * (1.0 + sol.b[i]), "{name}: b_{i} < c_{i}^2");
        }
        for i in 0..sol.n_segments {
            let cbar = sol.c[i] + sol.c[i + 1];
            assert!(cbar * sol.d[i] >= 1.0 - 1e-6, "{name}: (c_{i} + c_{{i+1}}) d_{i} = {}", cbar * sol.d[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// min f·x over the ball ‖x − x0‖ <= r has value f·x0 − r‖f‖.
    #[test]
    fn linear_objective_over_a_ball(
        x0 in prop::collection::vec(-5.0f64..5.0, 3),
        f in prop::collection::vec(-2.0f64..2.0, 3),
        r in 0.1f64..4.0,
    ) {
        let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(fnorm > 1e-3);
        let mut p = ConicProgram::new();
        let xs: Vec<_> = (0..3).map(|i| p.add_var(format!("x{i}")).unwrap()).collect();
        let lhs: Vec<AffineExpr> = xs.iter().zip(&x0).map(|(&v, c)| AffineExpr::from(v) - *c).collect();
        p.add_cone(lhs, AffineExpr::constant(r)).unwrap();
        for (v, c) in xs.iter().zip(&f) {
            p.add_objective(*v, *c);
        }
        let res = p.solve();
        prop_assert_eq!(res.status, SolveStatus::Optimal);
        let want = f.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() - r * fnorm;
        prop_assert!((res.objective - want).abs() <= 1e-6 * (1.0 + want.abs()), "{} vs {want}", res.objective);
    }

    /// With x pinned, min w subject to w >= ‖Fx‖² returns ‖Fx‖².
    #[test]
    fn square_epigraph_is_tight(
        rows in 1usize..4,
        entries in prop::collection::vec(-3.0f64..3.0, 12),
        x0 in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let f = DMatrix::from_row_slice(rows, 3, &entries[..rows * 3]);
        let mut p = ConicProgram::new();
        let xs: Vec<_> = (0..3).map(|i| p.add_var(format!("x{i}")).unwrap()).collect();
        let w = p.add_var("w").unwrap();
        for (v, c) in xs.iter().zip(&x0) {
            p.add_eq(AffineExpr::from(*v) - *c).unwrap();
        }
        let mut fd = DMatrix::zeros(rows, 4);
        fd.columns_mut(0, 3).copy_from(&f);
        p.add_square_epigraph_dense(&fd, w).unwrap();
        p.add_objective(w, 1.0);
        let res = p.solve();
        prop_assert_eq!(res.status, SolveStatus::Optimal);
        let want = (&f * nalgebra::DVector::from_column_slice(&x0)).norm_squared();
        prop_assert!((res.value(w) - want).abs() <= 1e-6 * (1.0 + want), "{} vs {want}", res.value(w));
    }
}
