//! Persistence and the JSON/HTTP surface: setups, requirements, runs and
//! paginated trajectories.

mod http;
mod service;
mod store;

pub use http::router;
pub use service::{
    AdapterFactory, FailedCriterion, Feedback, LoopClaim, OracleFactory, RunStatusView, ScriptDirFactory, Service,
    ServiceError, TrajectoryPage,
};
pub use store::{SetupIndex, SetupRecord, Store, StoreError, StoreIndex};
