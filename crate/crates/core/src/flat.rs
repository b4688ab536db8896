//! Flat maps of the kinematic bicycle and the path/speed-profile
//! parameterization `y(t) = θ(s(t))`.
//!
//! With flat output `y = (x, y)` the state is `v = ‖ẏ‖`, `ψ = atan2(ẏ_y, ẏ_x)`
//! and the input is `v̇ = ẏ·ÿ / v`, `ψ̇ = (ÿ_y ẏ_x − ÿ_x ẏ_y) / v²`. These
//! divide by the speed, so at rest the parameterized forms are used instead:
//! heading comes from the path tangent `θ'(s)` and the derivatives are
//! expressed through `ṡ`, `s̈` and the path derivatives.

use nalgebra::Vector2;
use thiserror::Error;

use crate::bspline::{BSplineCurve, BSplineError};

/// Speed below which only the parameterized formulas are evaluated, m/s.
pub const REST_SPEED: f64 = 1e-6;

/// Slack on `s(t) ∈ [0, 1]` before the composition is rejected.
const PARAM_RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlatError {
    #[error("flat map is singular at zero speed")]
    SingularFlatMap,
    #[error("path tangent vanishes at s = {s}")]
    DegeneratePath { s: f64 },
    #[error("speed profile value {s} leaves [0, 1]")]
    ParameterRange { s: f64 },
    #[error("invalid vehicle parameters: {0}")]
    InvalidVehicle(String),
    #[error(transparent)]
    Spline(#[from] BSplineError),
}

/// Vehicle geometry and limits (SI units, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_speed: f64,
    pub max_accel: f64,
}

impl VehicleParams {
    pub fn new(wheelbase: f64, max_steer: f64, max_speed: f64, max_accel: f64) -> Result<Self, FlatError> {
        let p = Self { wheelbase, max_steer, max_speed, max_accel };
        p.validate()?;
        Ok(p)
    }

    /// A zero steering limit is accepted; it makes any turning infeasible
    /// downstream rather than being rejected here.
    pub fn validate(&self) -> Result<(), FlatError> {
        let fail = |m: &str| Err(FlatError::InvalidVehicle(m.into()));
        if !(self.wheelbase > 0.0 && self.wheelbase.is_finite()) {
            return fail("wheelbase must be positive");
        }
        if !(self.max_steer >= 0.0 && self.max_steer < std::f64::consts::FRAC_PI_2) {
            return fail("steering limit must lie in [0, pi/2)");
        }
        if !(self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return fail("speed limit must be positive");
        }
        if !(self.max_accel > 0.0 && self.max_accel.is_finite()) {
            return fail("acceleration limit must be positive");
        }
        Ok(())
    }

    /// Curvature bound `tan(γ̄) / L`.
    pub fn curvature_limit(&self) -> f64 {
        self.max_steer.tan() / self.wheelbase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
}

impl State {
    pub fn new(x: f64, y: f64, v: f64, psi: f64) -> Self {
        Self { x, y, v, psi }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Input {
    pub vdot: f64,
    pub psidot: f64,
}

/// Flat output and its first two time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSample {
    pub pos: Vector2<f64>,
    pub vel: Vector2<f64>,
    pub acc: Vector2<f64>,
}

/// Tangential (`s̈‖θ'‖`) and normal (`ṡ²(θ'·θ'')/‖θ'‖`) parts of `v̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelDecomposition {
    pub tangential: f64,
    pub normal: f64,
}

impl AccelDecomposition {
    pub fn total(&self) -> f64 {
        self.tangential + self.normal
    }
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn flat_to_state(sample: &FlatSample) -> Result<State, FlatError> {
    let v = sample.vel.norm();
    if v == 0.0 {
        return Err(FlatError::SingularFlatMap);
    }
    Ok(State { x: sample.pos.x, y: sample.pos.y, v, psi: sample.vel.y.atan2(sample.vel.x) })
}

pub fn flat_to_input(sample: &FlatSample) -> Result<Input, FlatError> {
    let v2 = sample.vel.norm_squared();
    if v2 == 0.0 {
        return Err(FlatError::SingularFlatMap);
    }
    Ok(Input {
        vdot: sample.vel.dot(&sample.acc) / v2.sqrt(),
        psidot: cross(&sample.vel, &sample.acc) / v2,
    })
}

/// Path derivatives `θ, θ', θ''` at `s`.
#[derive(Debug, Clone, Copy)]
pub struct PathPoint {
    pub pos: Vector2<f64>,
    pub d1: Vector2<f64>,
    pub d2: Vector2<f64>,
}

pub fn path_point(path: &BSplineCurve, s: f64) -> Result<PathPoint, FlatError> {
    let v = |r| path.eval(r, s).map(|p| Vector2::new(p[0], p[1]));
    Ok(PathPoint { pos: v(0)?, d1: v(1)?, d2: v(2)? })
}

/// `‖θ' × θ''‖ / ‖θ'‖³`, the quantity bounded by `tan(γ̄)/L`.
pub fn curvature_ratio(path: &BSplineCurve, s: f64) -> Result<f64, FlatError> {
    let p = path_point(path, s)?;
    let speed = p.d1.norm();
    if speed == 0.0 {
        return Err(FlatError::DegeneratePath { s });
    }
    Ok(cross(&p.d1, &p.d2).abs() / speed.powi(3))
}

/// Speed-profile state `(s, ṡ, s̈)` at `t`, with `s` clamped into `[0, 1]`
/// when it overshoots by rounding only.
pub fn profile_point(profile: &BSplineCurve, t: f64) -> Result<(f64, f64, f64), FlatError> {
    let s = profile.eval_scalar(0, t)?;
    if !(-PARAM_RANGE_TOL..=1.0 + PARAM_RANGE_TOL).contains(&s) {
        return Err(FlatError::ParameterRange { s });
    }
    Ok((s.clamp(0.0, 1.0), profile.eval_scalar(1, t)?, profile.eval_scalar(2, t)?))
}

/// `y = θ(s)`, `ẏ = ṡθ'`, `ÿ = s̈θ' + ṡ²θ''`.
pub fn path_speed_to_flat(path: &BSplineCurve, profile: &BSplineCurve, t: f64) -> Result<FlatSample, FlatError> {
    let (s, sd, sdd) = profile_point(profile, t)?;
    let p = path_point(path, s)?;
    Ok(FlatSample { pos: p.pos, vel: p.d1 * sd, acc: p.d1 * sdd + p.d2 * (sd * sd) })
}

/// Everything the reconstruction needs at one instant.
#[derive(Debug, Clone, Copy)]
pub struct ParameterizedPoint {
    pub s: f64,
    pub sdot: f64,
    pub sddot: f64,
    pub state: State,
    pub input: Input,
    pub accel: AccelDecomposition,
    /// Path-only steering angle.
    pub steer: f64,
}

/// Singularity-free state/input from a path point and profile derivatives.
pub fn parameterized_from_parts(
    p: &PathPoint,
    s: f64,
    sdot: f64,
    sddot: f64,
    wheelbase: f64,
) -> Result<ParameterizedPoint, FlatError> {
    let speed = p.d1.norm();
    if speed == 0.0 {
        return Err(FlatError::DegeneratePath { s });
    }
    let accel = AccelDecomposition {
        tangential: sddot * speed,
        normal: sdot * sdot * p.d1.dot(&p.d2) / speed,
    };
    let turn = cross(&p.d1, &p.d2);
    let state = State { x: p.pos.x, y: p.pos.y, v: sdot * speed, psi: p.d1.y.atan2(p.d1.x) };
    let input = Input { vdot: accel.total(), psidot: sdot * turn / (speed * speed) };
    let steer = (wheelbase * turn / speed.powi(3)).atan();
    Ok(ParameterizedPoint { s, sdot, sddot, state, input, accel, steer })
}

/// State and input at `t` without dividing by the speed.
pub fn parameterized_state(path: &BSplineCurve, profile: &BSplineCurve, t: f64) -> Result<(State, Input), FlatError> {
    let (s, sd, sdd) = profile_point(profile, t)?;
    let p = parameterized_from_parts(&path_point(path, s)?, s, sd, sdd, 1.0)?;
    Ok((p.state, p.input))
}

pub fn accel_decomposition(path: &BSplineCurve, profile: &BSplineCurve, t: f64) -> Result<AccelDecomposition, FlatError> {
    let (s, sd, sdd) = profile_point(profile, t)?;
    Ok(parameterized_from_parts(&path_point(path, s)?, s, sd, sdd, 1.0)?.accel)
}

/// `γ = atan(L (y''x' − x''y') / ‖θ'‖³)`, independent of the speed profile.
pub fn steering_angle(path: &BSplineCurve, profile: &BSplineCurve, t: f64, wheelbase: f64) -> Result<f64, FlatError> {
    let (s, _, _) = profile_point(profile, t)?;
    path_steering_angle(path, s, wheelbase)
}

pub fn path_steering_angle(path: &BSplineCurve, s: f64, wheelbase: f64) -> Result<f64, FlatError> {
    let p = path_point(path, s)?;
    let speed = p.d1.norm();
    if speed == 0.0 {
        return Err(FlatError::DegeneratePath { s });
    }
    Ok((wheelbase * cross(&p.d1, &p.d2) / speed.powi(3)).atan())
}

/// Bicycle dynamics `ẋ = f(x) + g(x)u` as `(ẋ, ẏ, v̇, ψ̇)`.
pub fn bicycle_rhs(state: &State, input: &Input) -> [f64; 4] {
    [state.v * state.psi.cos(), state.v * state.psi.sin(), input.vdot, input.psidot]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::KnotVector;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn sample(vel: (f64, f64), acc: (f64, f64)) -> FlatSample {
        FlatSample { pos: Vector2::zeros(), vel: Vector2::new(vel.0, vel.1), acc: Vector2::new(acc.0, acc.1) }
    }

    #[test]
    fn state_map_axis_cases() {
        let s = flat_to_state(&sample((1.0, 0.0), (0.0, 0.0))).unwrap();
        assert_eq!((s.v, s.psi), (1.0, 0.0));
        let s = flat_to_state(&sample((0.0, -2.0), (0.0, 0.0))).unwrap();
        assert_relative_eq!(s.v, 2.0);
        assert_relative_eq!(s.psi, -std::f64::consts::FRAC_PI_2);
        let s = flat_to_state(&sample((3.0, 4.0), (0.0, 0.0))).unwrap();
        assert_relative_eq!(s.v, 5.0);
        assert_relative_eq!(s.psi, 0.9272952180016122, epsilon = 1e-15);
        assert_eq!(flat_to_state(&sample((0.0, 0.0), (1.0, 0.0))), Err(FlatError::SingularFlatMap));
    }

    #[test]
    fn input_map_cases() {
        let u = flat_to_input(&sample((1.0, 0.0), (0.0, 0.0))).unwrap();
        assert_eq!((u.vdot, u.psidot), (0.0, 0.0));
        let u = flat_to_input(&sample((3.0, 4.0), (1.0, 2.0))).unwrap();
        assert_relative_eq!(u.vdot, 2.2, epsilon = 1e-14);
        assert_relative_eq!(u.psidot, 0.08, epsilon = 1e-14);
        // y(t) = (3t + t²/2, 4t + t²): finite differences of v and ψ at t = 0
        let st = |t: f64| flat_to_state(&sample((3.0 + t, 4.0 + 2.0 * t), (1.0, 2.0))).unwrap();
        let h = 1e-6;
        assert_relative_eq!((st(h).v - st(-h).v) / (2.0 * h), 2.2, epsilon = 1e-7);
        assert_relative_eq!((st(h).psi - st(-h).psi) / (2.0 * h), 0.08, epsilon = 1e-7);
        let u = flat_to_input(&sample((0.0, 1.0), (-1.0, 0.0))).unwrap();
        assert_relative_eq!(u.vdot, 0.0);
        assert_relative_eq!(u.psidot, 1.0);
        assert!(flat_to_input(&sample((0.0, 0.0), (1.0, 0.0))).is_err());
    }

    fn line_path() -> BSplineCurve {
        let k = KnotVector::clamped_uniform(4, 6, 0.0, 1.0).unwrap();
        let xs = [0.0, 0.05, 0.3, 0.7, 0.95, 1.0];
        BSplineCurve::new(k, DMatrix::from_fn(2, 6, |r, c| if r == 0 { 100.0 * xs[c] } else { 0.0 })).unwrap()
    }

    #[test]
    fn uniform_straight_motion() {
        // control points in arithmetic progression reproduce θ(s) = (100 s, 0)
        let k = KnotVector::clamped_uniform(3, 4, 0.0, 1.0).unwrap();
        let path = BSplineCurve::new(k, DMatrix::from_row_slice(2, 4, &[0., 100. / 3., 200. / 3., 100., 0., 0., 0., 0.])).unwrap();
        let tf = 8.0;
        let pk = KnotVector::clamped_uniform(3, 4, 0.0, tf).unwrap();
        let profile = BSplineCurve::scalar(pk, &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        for t in [0.0, 1.0, 4.5, 8.0] {
            let f = path_speed_to_flat(&path, &profile, t).unwrap();
            assert_relative_eq!(f.vel.x, 100.0 / tf, epsilon = 1e-12);
            assert!(f.acc.norm() < 1e-12);
            assert_eq!(steering_angle(&path, &profile, t, 2.6).unwrap(), 0.0);
        }
        assert_eq!(curvature_ratio(&path, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn heading_is_defined_at_rest() {
        let path = line_path();
        let pk = KnotVector::clamped_uniform(4, 8, 0.0, 10.0).unwrap();
        let profile = BSplineCurve::scalar(pk, &[0.0, 0.0, 0.1, 0.3, 0.7, 0.9, 1.0, 1.0]).unwrap();
        let f = path_speed_to_flat(&path, &profile, 0.0).unwrap();
        assert_eq!(f.vel.norm(), 0.0);
        let (x, u) = parameterized_state(&path, &profile, 0.0).unwrap();
        assert_eq!(x.v, 0.0);
        assert_eq!(x.psi, 0.0);
        assert!(u.vdot.is_finite() && u.psidot.is_finite());
    }

    #[test]
    fn parameter_range_is_enforced() {
        let path = line_path();
        let pk = KnotVector::clamped_uniform(3, 4, 0.0, 1.0).unwrap();
        let profile = BSplineCurve::scalar(pk, &[0.0, 0.6, 1.2, 1.5]).unwrap();
        assert!(matches!(path_speed_to_flat(&path, &profile, 1.0), Err(FlatError::ParameterRange { .. })));
    }

    #[test]
    fn degenerate_path_is_reported() {
        let k = KnotVector::clamped_uniform(3, 4, 0.0, 1.0).unwrap();
        let path = BSplineCurve::new(k, DMatrix::from_element(2, 4, 1.0)).unwrap();
        assert!(matches!(curvature_ratio(&path, 0.5), Err(FlatError::DegeneratePath { .. })));
        assert!(matches!(path_steering_angle(&path, 0.5, 1.0), Err(FlatError::DegeneratePath { .. })));
    }

    #[test]
    fn vehicle_validation() {
        assert!(VehicleParams::new(2.6, 0.0, 1.0, 1.0).is_ok());
        assert!(VehicleParams::new(2.6, 1.6, 1.0, 1.0).is_err());
        assert!(VehicleParams::new(0.0, 0.1, 1.0, 1.0).is_err());
        assert!(VehicleParams::new(2.6, 0.1, -1.0, 1.0).is_err());
        assert!(VehicleParams::new(2.6, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn wrap() {
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-0.5), -0.5);
    }
}
