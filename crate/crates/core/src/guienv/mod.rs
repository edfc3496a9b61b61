//! GUI environment side of the verification loop.
//!
//! [`Environment`] is the backend contract. The bundled backend simulates
//! declarative widget-tree apps ([`SimApp`]) deterministically; its
//! observations are textual renderings plus a 64-bit state digest.

mod app;
mod env;
pub mod oracle;
mod sim;

pub use app::{load_app, Aggregate, AppError, Binding, Bounds, Effect, Record, Screen, SimApp, Viewport, Widget, WidgetKind};
pub use env::{Environment, SimEnvironment};
pub use oracle::{compile_plan, oracle_agent, Expect, PlanError, PlanSet, PlanStep};
pub use sim::{state_hash, EnvError, EnvWarning, Observation, SimState};

use std::path::Path;

use crate::agentproto::{ReplayAdapter, ScriptLoadError};

/// Replay adapter backed by a script file.
pub fn scripted_agent(script: &Path) -> Result<ReplayAdapter, ScriptLoadError> {
    ReplayAdapter::from_file(script)
}
