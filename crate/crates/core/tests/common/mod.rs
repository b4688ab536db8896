#![allow(dead_code)]

use std::path::PathBuf;

use flatsocp::flat::{State, VehicleParams};
use flatsocp::scenario::{RegionConstraint, Scenario};
use flatsocp::verify::Trajectory;
use nalgebra::Vector2;
use rand::Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).expect("bundled scenario")
}

/// Random forward-driving scenario. Odd draws (by `k`) add a disc and a
/// halfspace around the straight segment between the endpoints.
pub fn random_scenario<R: Rng>(rng: &mut R, k: usize) -> Scenario {
    let dist = rng.gen_range(20.0..120.0);
    let ang: f64 = rng.gen_range(-0.4..0.4);
    let vmax = rng.gen_range(5.0..25.0);
    let veh = VehicleParams::new(
        rng.gen_range(2.0..3.5),
        rng.gen_range(0.2..0.6),
        vmax,
        rng.gen_range(1.0..4.0),
    )
    .unwrap();
    let x0 = State::new(
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
        rng.gen_range(0.0..vmax),
        ang + rng.gen_range(-0.2..0.2),
    );
    let xf = State::new(
        x0.x + dist * ang.cos(),
        x0.y + dist * ang.sin(),
        rng.gen_range(0.0..vmax),
        ang + rng.gen_range(-0.2..0.2),
    );
    let mut s = Scenario::new(x0, xf, veh);
    s.nu = rng.gen_range(0.5..2.0);
    if k % 2 == 1 {
        let c = (x0.position() + xf.position()) / 2.0;
        s.region.constraints.push(RegionConstraint::Disc { center: c, radius: dist * 0.6 });
        let n = Vector2::new(-ang.sin(), ang.cos());
        s.region.constraints.push(RegionConstraint::HalfSpace { normal: n, offset: n.dot(&c) + rng.gen_range(3.0..10.0) });
    }
    s
}

/// Worst sampled margins of the four safety sets, computed straight from
/// the scenario: steering, region, speed and acceleration.
pub fn sampled_margins(traj: &Trajectory, s: &Scenario) -> [f64; 4] {
    let veh = &s.vehicle;
    let mut m = [f64::INFINITY; 4];
    for p in &traj.samples {
        m[0] = m[0].min(veh.max_steer - p.gamma.abs());
        for c in &s.region.constraints {
            let r = Vector2::new(p.x, p.y);
            let g = match c {
                RegionConstraint::HalfSpace { normal, offset } => offset - normal.dot(&r),
                RegionConstraint::Disc { center, radius } => radius - (r - center).norm(),
            };
            m[1] = m[1].min(g);
        }
        m[2] = m[2].min(p.v).min(veh.max_speed - p.v);
        m[3] = m[3].min(veh.max_accel - p.vdot.abs());
    }
    m
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Max-norm distance between a sampled state and a target state.
pub fn endpoint_error(x: f64, y: f64, v: f64, psi: f64, want: &State) -> f64 {
    (x - want.x).abs().max((y - want.y).abs()).max((v - want.v).abs()).max(angle_diff(psi, want.psi))
}
