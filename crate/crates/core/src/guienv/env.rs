use std::sync::Arc;

use super::app::SimApp;
use super::sim::{EnvError, EnvWarning, Observation, SimState};
use crate::agentproto::Action;

/// What the verification loop needs from a GUI backend.
pub trait Environment: Send {
    /// Returns the environment to its initial state.
    fn reset(&mut self);
    fn observe(&self) -> Observation;
    fn execute(&mut self, action: &Action) -> Result<Option<EnvWarning>, EnvError>;
}

/// The bundled deterministic backend.
#[derive(Debug, Clone)]
pub struct SimEnvironment {
    app: Arc<SimApp>,
    state: SimState,
}

impl SimEnvironment {
    pub fn new(app: Arc<SimApp>) -> Self {
        let state = SimState::reset(&app);
        Self { app, state }
    }

    pub fn app(&self) -> &SimApp {
        &self.app
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }
}

impl Environment for SimEnvironment {
    fn reset(&mut self) {
        self.state = SimState::reset(&self.app);
    }

    fn observe(&self) -> Observation {
        self.state.observe(&self.app)
    }

    fn execute(&mut self, action: &Action) -> Result<Option<EnvWarning>, EnvError> {
        self.state.execute(&self.app, action)
    }
}
