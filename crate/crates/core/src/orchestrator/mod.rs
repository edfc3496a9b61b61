//! Drives verification runs: the per-run agent loop, slot leasing,
//! parallel scheduling, cost accounting and the on-disk run log.

mod config;
mod cost;
mod pool;
mod run;
mod runlog;
mod schedule;

pub use config::{ConfigError, RunConfig};
pub use cost::{compute_cost, Rates};
pub use pool::{DisplaySlot, Lease, PoolError, SlotPool, SlotState};
pub use run::{run_verification, FailureReason, RunContext, RunStatus, TrajectoryStep, VerificationRun};
pub use runlog::{decode_run_log, encode_run_log, read_run_log, write_run_log, RunLogError};
pub use schedule::{run_jobs, RegistryError, RunBackend, RunJob, RunRegistry};
