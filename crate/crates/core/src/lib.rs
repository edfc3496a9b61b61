//! Requirement verification for interactive GUI applications.
//!
//! An agent works through an application one action at a time, the run
//! loop records each (observation, reasoning, action) step, and the final
//! summary assigns a verdict to every acceptance criterion.

pub mod agentproto;
pub mod evalharness;
pub mod guienv;
pub mod mcpserver;
pub mod orchestrator;
pub mod reqmodel;
pub mod storeapi;
