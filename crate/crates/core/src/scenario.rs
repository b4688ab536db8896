//! Planning problem data and its JSON scenario file.

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flat::{State, VehicleParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

/// One convex constraint on the position `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionConstraint {
    /// `normal · r <= offset`
    HalfSpace { normal: Vector2<f64>, offset: f64 },
    /// `‖r − center‖ <= radius`
    Disc { center: Vector2<f64>, radius: f64 },
}

impl RegionConstraint {
    /// Signed slack, nonnegative inside.
    pub fn margin(&self, r: &Vector2<f64>) -> f64 {
        match *self {
            RegionConstraint::HalfSpace { normal, offset } => offset - normal.dot(r),
            RegionConstraint::Disc { center, radius } => radius - (r - center).norm(),
        }
    }
}

/// Convex drivable region: the intersection of its constraints (the whole
/// plane when empty).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Region {
    pub constraints: Vec<RegionConstraint>,
}

impl Region {
    pub fn plane() -> Self {
        Self::default()
    }

    /// Smallest constraint slack (`+∞` for the whole plane).
    pub fn margin(&self, r: &Vector2<f64>) -> f64 {
        self.constraints.iter().map(|c| c.margin(r)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, r: &Vector2<f64>, tol: f64) -> bool {
        self.margin(r) >= -tol
    }
}

/// Spline resolution of the three stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplineParams {
    pub path_degree: usize,
    /// Index of the last path control point (`N_θ`).
    pub path_segments: usize,
    pub profile_degree: usize,
    /// Index of the last speed-profile control point (`N_s`).
    pub profile_segments: usize,
    /// Number of grid segments of the time stage (`N_t`).
    pub time_segments: usize,
}

impl Default for SplineParams {
    fn default() -> Self {
        Self { path_degree: 4, path_segments: 20, profile_degree: 4, profile_segments: 20, time_segments: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub initial: State,
    pub goal: State,
    pub vehicle: VehicleParams,
    pub region: Region,
    /// Duration weight `ν`, 1/s.
    pub nu: f64,
    pub spline: SplineParams,
    /// Skips the time stage when set.
    pub fixed_tf: Option<f64>,
}

impl Scenario {
    /// Open-plane scenario with default spline resolution and `ν = 1`.
    pub fn new(initial: State, goal: State, vehicle: VehicleParams) -> Self {
        Self { initial, goal, vehicle, region: Region::plane(), nu: 1.0, spline: SplineParams::default(), fixed_tf: None }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.vehicle.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        for (name, s) in [("initial", &self.initial), ("final", &self.goal)] {
            if ![s.x, s.y, s.v, s.psi].iter().all(|v| v.is_finite()) {
                return bad(format!("{name} state is not finite"));
            }
            if s.v < 0.0 || s.v > self.vehicle.max_speed {
                return bad(format!("{name} speed {} outside [0, {}]", s.v, self.vehicle.max_speed));
            }
            if !self.region.contains(&s.position(), 0.0) {
                return bad(format!("{name} position lies outside the drivable region"));
            }
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("duration weight nu = {} must be positive", self.nu));
        }
        for c in &self.region.constraints {
            match c {
                RegionConstraint::HalfSpace { normal, offset } if !(normal.norm() > 0.0 && offset.is_finite()) => {
                    return bad("half-space needs a nonzero normal".into())
                }
                RegionConstraint::Disc { radius, .. } if !(*radius > 0.0) => return bad("disc radius must be positive".into()),
                _ => {}
            }
        }
        let sp = &self.spline;
        if sp.path_degree < 3 || sp.profile_degree < 3 {
            return bad("path and profile degrees must be at least 3".into());
        }
        if sp.path_segments < sp.path_degree.max(3) || sp.profile_segments < sp.profile_degree.max(3) {
            return bad("need at least as many segments as the spline degree".into());
        }
        if sp.time_segments < 1 {
            return bad("time grid needs at least one segment".into());
        }
        if let Some(tf) = self.fixed_tf {
            if !(tf > 0.0 && tf.is_finite()) {
                return bad(format!("fixed_tf = {tf} must be positive"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let s = Scenario::from(file);
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}

// ---- file schema ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleEntry {
    #[serde(rename = "L")]
    pub wheelbase: f64,
    pub gamma_max_rad: f64,
    pub v_max: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum RegionEntry {
    HalfSpace { a: [f64; 2], b: f64 },
    Disc { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsEntry {
    pub nu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineEntry {
    pub d_theta: usize,
    #[serde(rename = "N_theta")]
    pub n_theta: usize,
    pub d_s: usize,
    #[serde(rename = "N_s")]
    pub n_s: usize,
    #[serde(rename = "N_t")]
    pub n_t: usize,
}

/// JSON scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub initial: StateEntry,
    #[serde(rename = "final")]
    pub goal: StateEntry,
    pub vehicle: VehicleEntry,
    #[serde(default)]
    pub region: Vec<RegionEntry>,
    #[serde(default = "default_weights")]
    pub weights: WeightsEntry,
    #[serde(default = "default_spline")]
    pub spline: SplineEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_tf: Option<f64>,
}

fn default_weights() -> WeightsEntry {
    WeightsEntry { nu: 1.0 }
}

fn default_spline() -> SplineEntry {
    let d = SplineParams::default();
    SplineEntry { d_theta: d.path_degree, n_theta: d.path_segments, d_s: d.profile_degree, n_s: d.profile_segments, n_t: d.time_segments }
}

impl From<StateEntry> for State {
    fn from(s: StateEntry) -> Self {
        State::new(s.x, s.y, s.v, s.psi)
    }
}

impl From<&State> for StateEntry {
    fn from(s: &State) -> Self {
        StateEntry { x: s.x, y: s.y, v: s.v, psi: s.psi }
    }
}

impl From<ScenarioFile> for Scenario {
    fn from(f: ScenarioFile) -> Self {
        let region = Region {
            constraints: f
                .region
                .into_iter()
                .map(|r| match r {
                    RegionEntry::HalfSpace { a, b } => RegionConstraint::HalfSpace { normal: Vector2::new(a[0], a[1]), offset: b },
                    RegionEntry::Disc { center, radius } => {
                        RegionConstraint::Disc { center: Vector2::new(center[0], center[1]), radius }
                    }
                })
                .collect(),
        };
        Scenario {
            initial: f.initial.into(),
            goal: f.goal.into(),
            vehicle: VehicleParams {
                wheelbase: f.vehicle.wheelbase,
                max_steer: f.vehicle.gamma_max_rad,
                max_speed: f.vehicle.v_max,
                max_accel: f.vehicle.a_max,
            },
            region,
            nu: f.weights.nu,
            spline: SplineParams {
                path_degree: f.spline.d_theta,
                path_segments: f.spline.n_theta,
                profile_degree: f.spline.d_s,
                profile_segments: f.spline.n_s,
                time_segments: f.spline.n_t,
            },
            fixed_tf: f.fixed_tf,
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            initial: (&s.initial).into(),
            goal: (&s.goal).into(),
            vehicle: VehicleEntry {
                wheelbase: s.vehicle.wheelbase,
                gamma_max_rad: s.vehicle.max_steer,
                v_max: s.vehicle.max_speed,
                a_max: s.vehicle.max_accel,
            },
            region: s
                .region
                .constraints
                .iter()
                .map(|c| match *c {
                    RegionConstraint::HalfSpace { normal, offset } => RegionEntry::HalfSpace { a: [normal.x, normal.y], b: offset },
                    RegionConstraint::Disc { center, radius } => RegionEntry::Disc { center: [center.x, center.y], radius },
                })
                .collect(),
            weights: WeightsEntry { nu: s.nu },
            spline: SplineEntry {
                d_theta: s.spline.path_degree,
                n_theta: s.spline.path_segments,
                d_s: s.spline.profile_degree,
                n_s: s.spline.profile_segments,
                n_t: s.spline.time_segments,
            },
            fixed_tf: s.fixed_tf,
        }
    }
}
