mod common;

use flatsocp::bspline::BSplineCurve;
use flatsocp::error::{PlanError, Stage};
use flatsocp::flat::{State, VehicleParams};
use flatsocp::path::{default_relaxation_params, solve_path, PathSolution};
use flatsocp::scenario::Scenario;
use flatsocp::speed::solve_speed;
use flatsocp::time::{recover_duration, solve_time};
use flatsocp::verify::verify;
use flatsocp::{plan, PlanOptions};
use nalgebra::Vector2;
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::{angle_diff, load, random_scenario};

fn straight(from: State, to: State, veh: VehicleParams) -> Scenario {
    Scenario::new(from, to, veh)
}

/// Dense grid over `[0, 1]`.
fn grid(n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| i as f64 / n as f64)
}

#[test]
fn default_relaxation_matches_the_scenario() {
    let s = load("example1.json");
    let r = default_relaxation_params(&s).unwrap();
    let want = 2.0 * (0.0044f64).tan() / 2.601 * (100.0f64.powi(2) + 16.0).sqrt();
    assert!((r.alpha - want).abs() < 1e-12 * want);
    assert!((r.direction - Vector2::new(100.0, 4.0).normalize()).norm() < 1e-15);

    // α scales with the endpoint distance; the direction does not.
    let mut scaled = s.clone();
    scaled.goal.x *= 3.0;
    scaled.goal.y *= 3.0;
    let r3 = default_relaxation_params(&scaled).unwrap();
    assert!((r3.alpha - 3.0 * r.alpha).abs() < 1e-12 * r3.alpha);
    assert!((r3.direction - r.direction).norm() < 1e-15);
}

#[test]
fn planned_headings_match_the_endpoints() {
    for name in ["example1.json", "example2.json"] {
        let s = load(name);
        let p = plan(&s, &PlanOptions::default()).unwrap();
        let first = &p.trajectory.samples[0];
        let last = p.trajectory.samples.last().unwrap();
        assert!(angle_diff(first.psi, s.initial.psi) < 1e-9, "{name}: initial heading {}", first.psi);
        assert!(angle_diff(last.psi, s.goal.psi) < 1e-9, "{name}: final heading {}", last.psi);
    }
}

/// Curvature, tangent norm and region membership sampled on the path.
fn check_path_geometry(path: &PathSolution, s: &Scenario) {
    let k = s.vehicle.curvature_limit();
    for u in grid(20_000) {
        let d1 = path.path.eval(1, u).unwrap();
        let d2 = path.path.eval(2, u).unwrap();
        let speed = d1.norm();
        let kappa = (d1[0] * d2[1] - d1[1] * d2[0]).abs() / speed.powi(3);
        assert!(kappa <= k + 1e-9, "curvature {kappa} > {k} at s = {u}");
        assert!(speed >= path.v_theta_min * (1.0 - 1e-9), "tangent {speed} below {}", path.v_theta_min);
        assert!(speed <= path.v_theta_max * (1.0 + 1e-9), "tangent {speed} above {}", path.v_theta_max);
        let p = path.path.eval(0, u).unwrap();
        let r = Vector2::new(p[0], p[1]);
        assert!(s.region.margin(&r) >= -1e-9, "outside region at s = {u}");
    }
}

#[test]
fn path_respects_curvature_speed_and_region_on_a_dense_grid() {
    check_path_geometry(&solve_path(&load("example1.json")).unwrap(), &load("example1.json"));
    check_path_geometry(&solve_path(&load("example2.json")).unwrap(), &load("example2.json"));
    let mut rng = StdRng::seed_from_u64(7);
    let mut checked = 0;
    for k in 0..40 {
        let s = random_scenario(&mut rng, 2 * k + 1);
        if let Ok(path) = solve_path(&s) {
            assert!(!s.region.constraints.is_empty());
            check_path_geometry(&path, &s);
            checked += 1;
        }
        if checked == 5 {
            break;
        }
    }
    assert_eq!(checked, 5, "too few region scenarios solved");
}

#[test]
fn path_meets_its_endpoints() {
    let s = load("example2.json");
    let path = solve_path(&s).unwrap();
    let start = path.path.eval(0, 0.0).unwrap();
    let end = path.path.eval(0, 1.0).unwrap();
    assert!((start[0] - s.initial.x).abs() < 1e-9 && (start[1] - s.initial.y).abs() < 1e-9);
    assert!((end[0] - s.goal.x).abs() < 1e-9 && (end[1] - s.goal.y).abs() < 1e-9);
    for (t, psi) in [(0.0, s.initial.psi), (1.0, s.goal.psi)] {
        let d = path.path.eval(1, t).unwrap();
        assert!(angle_diff(d[1].atan2(d[0]), psi) < 1e-9);
    }
}

#[test]
fn no_steering_means_no_lane_change() {
    let mut s = load("example2.json");
    s.vehicle.max_steer = 0.0;
    match solve_path(&s) {
        Err(PlanError::Infeasible { stage: Stage::Path, .. }) => {}
        other => panic!("expected PATH-SOCP infeasible, got {other:?}"),
    }
}

#[test]
fn generous_limits_drive_at_the_speed_limit() {
    let veh = VehicleParams::new(2.6, 0.5, 10.0, 1e3).unwrap();
    let mut s = straight(State::new(0.0, 0.0, 10.0, 0.0), State::new(100.0, 0.0, 10.0, 0.0), veh);
    s.nu = 100.0;
    let path = solve_path(&s).unwrap();
    let sol = solve_time(&path, &s).unwrap();
    for (b, node) in sol.b.iter().zip(&sol.nodes) {
        let ratio = b * node.tangent_norm.powi(2) / 100.0;
        assert!((0.98..=1.0 + 1e-6).contains(&ratio), "b ‖θ'‖² / v̄² = {ratio} at s = {}", node.s);
    }
}

#[test]
fn duration_shrinks_as_the_speed_limit_grows() {
    let base = load("example2.json");
    let mut prev = f64::INFINITY;
    for vmax in [18.0, 20.0, 23.0, 27.0, 32.0] {
        let mut s = base.clone();
        s.vehicle.max_speed = vmax;
        let t_f = solve_time(&solve_path(&s).unwrap(), &s).unwrap().t_f;
        assert!(t_f <= prev * (1.0 + 1e-6), "v̄ = {vmax}: t_f {t_f} > {prev}");
        prev = t_f;
    }
}

#[test]
fn recovered_duration_converges_under_refinement() {
    let err = |n: usize| {
        let b: Vec<f64> = (0..=n).map(|i| (1.0 + i as f64 / n as f64).powi(2)).collect();
        (recover_duration(&b).unwrap().iter().sum::<f64>() - 2f64.ln()).abs()
    };
    let (coarse, fine) = (err(20), err(200));
    assert!(coarse < 1e-3, "{coarse:e}");
    assert!(coarse / fine >= 50.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn straight_cruise_duration_is_distance_over_speed() {
    let veh = VehicleParams::new(2.601, 0.785, 19.0, 2.0).unwrap();
    let s = straight(State::new(0.0, 0.0, 17.0, 0.0), State::new(75.0, 0.0, 17.0, 0.0), veh);
    let t_f = plan(&s, &PlanOptions::default()).unwrap().speed.t_f;
    assert!((t_f - 75.0 / 17.0).abs() < 0.1 * 75.0 / 17.0, "t_f = {t_f}");
}

fn profile_samples(profile: &BSplineCurve, t_f: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    grid(10_000).map(move |u| {
        let t = u * t_f;
        (profile.eval_scalar(0, t).unwrap(), profile.eval_scalar(1, t).unwrap())
    })
}

#[test]
fn speed_profile_is_monotone_and_spans_the_path() {
    for name in ["example1.json", "example2.json"] {
        let p = plan(&load(name), &PlanOptions::default()).unwrap();
        let prof = &p.speed.profile;
        assert!(prof.eval_scalar(0, 0.0).unwrap().abs() < 1e-12);
        assert!((prof.eval_scalar(0, p.speed.t_f).unwrap() - 1.0).abs() < 1e-12);
        let mut last = -1.0;
        for (s, sdot) in profile_samples(prof, p.speed.t_f) {
            assert!(sdot >= -1e-9, "{name}: ṡ = {sdot}");
            assert!(s >= last - 1e-12);
            last = s;
        }
    }
}

#[test]
fn rest_to_rest_stays_within_vehicle_limits() {
    let s = load("example1.json");
    let p = plan(&s, &PlanOptions::default()).unwrap();
    let samples = &p.trajectory.samples;
    assert!(samples[0].v.abs() < 1e-9 && samples.last().unwrap().v.abs() < 1e-9);
    for x in samples {
        assert!(x.v <= 4.2 + 1e-9 && x.v >= -1e-9, "v = {}", x.v);
        assert!(x.vdot.abs() <= 0.6 + 1e-9, "vdot = {}", x.vdot);
    }
}

#[test]
fn far_too_short_horizon_is_infeasible() {
    let s = load("example1.json");
    let path = solve_path(&s).unwrap();
    match solve_speed(&path, &s.vehicle, &s.spline, 2.0, s.initial.v, s.goal.v) {
        Err(PlanError::Infeasible { stage: Stage::Speed, .. }) => {}
        other => panic!("expected SPEED-SOCP infeasible, got {:?}", other.map(|x| x.t_f)),
    }
}

#[test]
fn fixed_duration_skips_the_time_stage() {
    let mut s = load("example2.json");
    s.fixed_tf = Some(4.6);
    let p = plan(&s, &PlanOptions::default()).unwrap();
    assert!(p.time.is_none());
    assert_eq!(p.retries, 0);
    assert_eq!(p.speed.t_f, 4.6);
}

#[test]
fn moving_one_control_point_breaks_the_steering_certificate() {
    let s = load("example1.json");
    let p = plan(&s, &PlanOptions::default()).unwrap();
    assert!(p.report.all_certificates_pass());
    let j = 9;
    let normal = Vector2::new(-p.path.relaxation.direction[1], p.path.relaxation.direction[0]);
    let mut ctrl = p.path.path.control_points().clone();
    ctrl[(0, j)] += 2.0 * normal[0];
    ctrl[(1, j)] += 2.0 * normal[1];
    let mut bent = p.path.clone();
    bent.path = BSplineCurve::new(p.path.path.knots().clone(), ctrl).unwrap();
    let report = verify(&p.trajectory, &bent, &p.speed, &s);
    let steer = report.set("S_gamma").unwrap();
    assert!(!steer.certificate);
    let idx = steer.violating_index.expect("index of the offending control point");
    assert!((j..=j + 2).contains(&idx), "violating index {idx}");
}

#[test]
fn reports_are_deterministic() {
    let s = load("example2.json");
    let a = plan(&s, &PlanOptions::default()).unwrap().report.to_json();
    let b = plan(&s, &PlanOptions::default()).unwrap().report.to_json();
    assert_eq!(a, b);
}

#[test]
fn straight_scenario_keeps_its_heading() {
    let psi: f64 = 0.3;
    let veh = VehicleParams::new(2.6, 0.4, 15.0, 2.0).unwrap();
    let goal = State::new(60.0 * psi.cos(), 60.0 * psi.sin(), 5.0, psi);
    let s = straight(State::new(0.0, 0.0, 5.0, psi), goal, veh);
    let p = plan(&s, &PlanOptions::default()).unwrap();
    for x in &p.trajectory.samples {
        assert!(angle_diff(x.psi, psi) < 1e-9, "psi = {} at t = {}", x.psi, x.t);
        assert!(x.gamma.abs() < 1e-9);
    }
}
