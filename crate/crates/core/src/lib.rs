//! N-stage SEIR epidemic models under time-dependent control.
//!
//! * [`model`]: parameters, states, the right-hand side and the equal-gamma reduction.
//! * [`threshold`] and [`spectral`]: susceptible thresholds, the Lyapunov-like `U`,
//!   eigen-structure of the linearised infection block and its decay envelope.
//! * [`strategy`]: control vectors `q(t)` and strategy classification.
//! * [`integrator`]: adaptive integration with events and trajectory analysis.
//! * [`experiments`]: figure data, scans and randomized proposition checks.

pub mod error;
pub mod experiments;
pub mod integrator;
pub mod model;
pub mod spectral;
pub mod strategy;
pub mod threshold;

pub use error::{Error, Result};
pub use integrator::{integrate, IntegrationConfig, Trajectory};
pub use model::{make_seiaqr, make_seiar, ModelParams, StageSpec, State};
pub use strategy::{Multipliers, Strategy};
