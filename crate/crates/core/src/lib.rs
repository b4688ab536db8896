pub mod bspline;
pub mod cli;
pub mod error;
pub mod flat;
pub mod path;
pub mod pipeline;
pub mod quadrature;
pub mod scenario;
pub mod socp;
pub mod speed;
pub mod time;
pub mod verify;

pub use error::{CertificateFailure, PlanError, Stage};
pub use pipeline::{plan, Plan, PlanOptions};
pub use scenario::Scenario;
