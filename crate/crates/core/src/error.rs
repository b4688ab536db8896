use std::fmt;

use thiserror::Error;

use crate::bspline::BSplineError;
use crate::flat::FlatError;
use crate::scenario::ScenarioError;
use crate::socp::{SocpError, SolveStatus};

/// The three conic programs of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Path,
    Time,
    Speed,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Path => "PATH-SOCP",
            Stage::Time => "TIME-SOCP",
            Stage::Speed => "SPEED-SOCP",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A control-point condition that does not hold.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateFailure {
    /// Short name of the violated condition, e.g. `"path acceleration"`.
    pub condition: &'static str,
    /// Offending (virtual) control point or window, when there is one.
    pub index: Option<usize>,
    /// Amount by which the condition is exceeded, in its native units.
    pub excess: f64,
}

impl fmt::Display for CertificateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated by {:.3e}", self.condition, self.excess)?;
        if let Some(i) = self.index {
            write!(f, " at index {i}")?;
        }
        Ok(())
    }
}

/// Checks `lhs <= rhs` up to a tolerance relative to the magnitudes involved.
pub(crate) fn check_le(
    condition: &'static str,
    index: Option<usize>,
    lhs: f64,
    rhs: f64,
    tol: f64,
) -> Result<(), CertificateFailure> {
    let slack = tol * (1.0 + lhs.abs().max(rhs.abs()));
    if lhs <= rhs + slack {
        Ok(())
    } else {
        Err(CertificateFailure { condition, index, excess: lhs - rhs })
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("degenerate scenario: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{stage} is infeasible{}", fmt_detail(.detail))]
    Infeasible { stage: Stage, detail: String },
    #[error("{stage} is unbounded")]
    Unbounded { stage: Stage },
    #[error("{stage} failed numerically")]
    NumericalFailure { stage: Stage },
    #[error("{stage} solution fails its own certificate: {failure}")]
    CertificateViolation { stage: Stage, failure: CertificateFailure },
    #[error("speed vanishes on interior time segment {segment}")]
    Stalled { segment: usize },
    #[error(transparent)]
    Flat(#[from] FlatError),
    #[error(transparent)]
    Spline(#[from] BSplineError),
    #[error(transparent)]
    Program(#[from] SocpError),
}

fn fmt_detail(d: &str) -> String {
    if d.is_empty() {
        String::new()
    } else {
        format!(" ({d})")
    }
}

impl PlanError {
    /// Maps a non-optimal solver status to the matching error.
    pub fn from_status(stage: Stage, status: SolveStatus) -> Self {
        match status {
            SolveStatus::Infeasible => PlanError::Infeasible { stage, detail: String::new() },
            SolveStatus::Unbounded => PlanError::Unbounded { stage },
            SolveStatus::Optimal | SolveStatus::NumericalFailure => PlanError::NumericalFailure { stage },
        }
    }

    /// Stage the error originates from, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PlanError::Infeasible { stage, .. }
            | PlanError::Unbounded { stage }
            | PlanError::NumericalFailure { stage }
            | PlanError::CertificateViolation { stage, .. } => Some(*stage),
            PlanError::Stalled { .. } => Some(Stage::Time),
            PlanError::Degenerate(_) => Some(Stage::Path),
            _ => None,
        }
    }
}
