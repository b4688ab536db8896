//! Trajectory reconstruction through the flat maps and safety verification
//! by control-point certificates and dense sampling.

use serde::{Deserialize, Serialize};

use crate::error::{CertificateFailure, PlanError};
use crate::flat::{bicycle_rhs, parameterized_from_parts, path_point, profile_point, wrap_angle, Input, State};
use crate::path::PathSolution;
use crate::quadrature::simpson_uniform;
use crate::scenario::Scenario;
use crate::speed::SpeedSolution;

/// Default number of samples for reconstruction and verification.
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Relative tolerance of the certificate re-checks.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// One row of a reconstructed trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
    pub vdot: f64,
    pub psidot: f64,
    pub gamma: f64,
    pub s: f64,
    pub sdot: f64,
    pub sddot: f64,
}

impl Sample {
    pub fn state(&self) -> State {
        State::new(self.x, self.y, self.v, self.psi)
    }

    pub fn input(&self) -> Input {
        Input { vdot: self.vdot, psidot: self.psidot }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub t_f: f64,
}

impl Trajectory {
    /// Builds from rows, checking that time increases strictly from zero and
    /// every field is finite.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self, PlanError> {
        if samples.len() < 2 {
            return Err(PlanError::InvalidInput("trajectory needs at least two samples".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            let f = [s.t, s.x, s.y, s.v, s.psi, s.vdot, s.psidot, s.gamma, s.s, s.sdot, s.sddot];
            if !f.iter().all(|v| v.is_finite()) {
                return Err(PlanError::InvalidInput(format!("row {i} has a non-finite value")));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(PlanError::InvalidInput(format!("time does not increase at row {i}")));
            }
        }
        let t_f = samples[samples.len() - 1].t - samples[0].t;
        Ok(Self { samples, t_f })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Samples the trajectory on a uniform grid over `[0, t_f]`; the last
/// sample is the left limit at `t_f`.
pub fn reconstruct(
    path: &PathSolution,
    speed: &SpeedSolution,
    wheelbase: f64,
    n_samples: usize,
) -> Result<Trajectory, PlanError> {
    if n_samples < 2 {
        return Err(PlanError::InvalidInput("need at least two samples".into()));
    }
    let t_f = speed.t_f;
    let h = t_f / (n_samples - 1) as f64;
    let samples = (0..n_samples)
        .map(|i| {
            let t = if i + 1 == n_samples { t_f } else { i as f64 * h };
            let (s, sdot, sddot) = profile_point(&speed.profile, t)?;
            let p = parameterized_from_parts(&path_point(&path.path, s)?, s, sdot, sddot, wheelbase)?;
            Ok(Sample {
                t,
                x: p.state.x,
                y: p.state.y,
                v: p.state.v,
                psi: p.state.psi,
                vdot: p.input.vdot,
                psidot: p.input.psidot,
                gamma: p.steer,
                s,
                sdot,
                sddot,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok(Trajectory { samples, t_f })
}

/// Names of the four safety sets, in report order.
pub const SET_NAMES: [&str; 4] = ["S_gamma", "S_D", "S_v", "S_vdot"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub name: String,
    /// Whether the control-point certificate holds.
    pub certificate: bool,
    /// Smallest sampled slack in the constraint's units; `null` when the
    /// set imposes no constraint.
    pub worst_margin: Option<f64>,
    pub worst_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Offending control point (or window) of a failed certificate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violating_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointResiduals {
    pub initial_residual: f64,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub sets: Vec<SetReport>,
    pub endpoints: EndpointResiduals,
    /// `ν t_f + ∫‖ÿ‖² dt`.
    pub objective: f64,
    pub t_f: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SafetyReport {
    pub fn all_certificates_pass(&self) -> bool {
        self.sets.iter().all(|s| s.certificate)
    }

    pub fn set(&self, name: &str) -> Option<&SetReport> {
        self.sets.iter().find(|s| s.name == name)
    }

    /// Smallest sampled margin across the sets.
    pub fn worst_margin(&self) -> f64 {
        self.sets.iter().filter_map(|s| s.worst_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sampled slack of each safety set at one sample (`None` = unconstrained).
pub fn sample_margins(s: &Sample, scenario: &Scenario) -> [Option<f64>; 4] {
    let veh = &scenario.vehicle;
    let region = if scenario.region.constraints.is_empty() {
        None
    } else {
        Some(scenario.region.margin(&nalgebra::Vector2::new(s.x, s.y)))
    };
    [
        Some(veh.max_steer - s.gamma.abs()),
        region,
        Some(s.v.min(veh.max_speed - s.v)),
        Some(veh.max_accel - s.vdot.abs()),
    ]
}

/// Worst sampled margin per set with its time, as `(margin, t)`.
pub fn worst_margins(traj: &Trajectory, scenario: &Scenario) -> [Option<(f64, f64)>; 4] {
    let mut worst: [Option<(f64, f64)>; 4] = [None; 4];
    for s in &traj.samples {
        for (w, m) in worst.iter_mut().zip(sample_margins(s, scenario)) {
            if let Some(m) = m {
                if w.is_none_or(|(best, _)| m < best) {
                    *w = Some((m, s.t));
                }
            }
        }
    }
    worst
}

/// Max-norm distance between two states, with the heading wrapped.
pub fn state_residual(a: &State, b: &State) -> f64 {
    [a.x - b.x, a.y - b.y, a.v - b.v, wrap_angle(a.psi - b.psi)].iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `ν t_f + ∫‖ÿ‖² dt` with `‖ÿ‖² = v̇² + v²ψ̇²`, by composite Simpson.
pub fn trajectory_objective(traj: &Trajectory, nu: f64) -> f64 {
    let acc: Vec<f64> = traj.samples.iter().map(|s| s.vdot * s.vdot + (s.v * s.psidot).powi(2)).collect();
    let h = traj.t_f / (traj.len() - 1) as f64;
    nu * traj.t_f + simpson_uniform(&acc, h)
}

pub fn verify(traj: &Trajectory, path: &PathSolution, speed: &SpeedSolution, scenario: &Scenario) -> SafetyReport {
    let veh = &scenario.vehicle;
    let tol = CERTIFICATE_TOL;
    let vt = path.v_theta_max;
    let certs: [Result<(), CertificateFailure>; 4] = [
        path.check_steering_certificate(tol),
        path.check_region_certificate(&scenario.region, tol),
        path.check_tangent_bound(tol).and_then(|_| speed.check_speed_certificate(vt, veh.max_speed, tol)),
        path.check_tangent_bound(tol)
            .and_then(|_| path.check_second_derivative_bound(tol))
            .and_then(|_| speed.check_accel_certificate(vt, path.a_theta_max, veh.max_accel, tol)),
    ];
    let worst = worst_margins(traj, scenario);
    let sets = SET_NAMES
        .iter()
        .zip(certs)
        .zip(worst)
        .map(|((name, cert), w)| SetReport {
            name: name.to_string(),
            certificate: cert.is_ok(),
            worst_margin: w.map(|w| w.0),
            worst_t: w.map(|w| w.1),
            detail: cert.as_ref().err().map(|f| f.to_string()),
            violating_index: cert.as_ref().err().and_then(|f| f.index),
        })
        .collect();
    let first = &traj.samples[0];
    let last = &traj.samples[traj.len() - 1];
    SafetyReport {
        sets,
        endpoints: EndpointResiduals {
            initial_residual: state_residual(&first.state(), &scenario.initial),
            final_residual: state_residual(&last.state(), &scenario.goal),
        },
        objective: trajectory_objective(traj, scenario.nu),
        t_f: traj.t_f,
        notes: Vec::new(),
    }
}

/// Largest `‖(x_{i+1} − x_{i−1})/(2h) − f(x_i) − g(x_i)u_i‖` over interior
/// samples, assuming a uniform grid.
pub fn ode_residual(traj: &Trajectory) -> f64 {
    let s = &traj.samples;
    if s.len() < 3 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 1..s.len() - 1 {
        let (a, b) = (&s[i - 1], &s[i + 1]);
        let h2 = b.t - a.t;
        let fd = [(b.x - a.x) / h2, (b.y - a.y) / h2, (b.v - a.v) / h2, wrap_angle(b.psi - a.psi) / h2];
        let rhs = bicycle_rhs(&s[i].state(), &s[i].input());
        let r = fd.iter().zip(rhs).map(|(d, f)| (d - f).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(r);
    }
    worst
}
