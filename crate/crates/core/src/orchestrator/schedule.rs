use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

use thiserror::Error;

use super::config::RunConfig;
use super::pool::{PoolError, SlotPool};
use super::run::{run_verification, FailureReason, RunContext, RunStatus, VerificationRun};
use crate::agentproto::ModelAdapter;
use crate::guienv::Environment;
use crate::reqmodel::{Requirement, RequirementState};

/// One queued verification.
#[derive(Debug, Clone)]
pub struct RunJob {
    pub run_id: String,
    pub setup_id: String,
    pub app_ref: String,
    pub requirement: Requirement,
}

/// Supplies a fresh environment and model adapter for each run.
pub trait RunBackend: Sync {
    fn environment(&self, job: &RunJob) -> Result<Box<dyn Environment>, String>;
    fn adapter(&self, job: &RunJob) -> Result<Box<dyn ModelAdapter>, String>;
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("run {run_id} cannot move from {from:?} to {to:?}")]
    BadTransition { run_id: String, from: RunStatus, to: RunStatus },
}

#[derive(Default)]
struct RegistryInner {
    status: BTreeMap<String, RunStatus>,
    running: usize,
    max_running: usize,
}

/// Tracks run status; status only ever moves forward.
#[derive(Default)]
pub struct RunRegistry {
    inner: Mutex<RegistryInner>,
}

impl RunRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, RegistryInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn enqueue(&self, run_id: &str) {
        self.lock().status.entry(run_id.to_string()).or_insert(RunStatus::Queued);
    }

    pub fn transition(&self, run_id: &str, to: RunStatus) -> Result<(), RegistryError> {
        let mut inner = self.lock();
        let from = *inner.status.get(run_id).ok_or_else(|| RegistryError::UnknownRun(run_id.into()))?;
        if from == to {
            return Ok(());
        }
        if to.rank() <= from.rank() {
            return Err(RegistryError::BadTransition { run_id: run_id.into(), from, to });
        }
        inner.status.insert(run_id.to_string(), to);
        if to == RunStatus::Running {
            inner.running += 1;
            inner.max_running = inner.max_running.max(inner.running);
        }
        if from == RunStatus::Running {
            inner.running -= 1;
        }
        Ok(())
    }

    pub fn status(&self, run_id: &str) -> Option<RunStatus> {
        self.lock().status.get(run_id).copied()
    }

    pub fn running(&self) -> usize {
        self.lock().running
    }

    /// Highest number of simultaneously running runs seen so far.
    pub fn max_running(&self) -> usize {
        self.lock().max_running
    }

    pub fn is_active(&self, run_id: &str) -> bool {
        self.status(run_id).is_some_and(|s| !s.is_terminal())
    }
}

/// Returns the slot to the pool when dropped, including during unwinding.
struct LeaseGuard<'a> {
    pool: &'a SlotPool,
    slot_id: String,
    run_id: String,
}

impl Drop for LeaseGuard<'_> {
    fn drop(&mut self) {
        let _ = self.pool.release(&self.slot_id, &self.run_id);
    }
}

fn execute_job(job: &RunJob, backend: &dyn RunBackend, cfg: &RunConfig) -> (VerificationRun, Requirement) {
    let mut req = job.requirement.clone();
    let mut env = match backend.environment(job) {
        Ok(e) => e,
        Err(e) => return failed(job, req, FailureReason::EnvironmentError, e),
    };
    let mut adapter = match backend.adapter(job) {
        Ok(a) => a,
        Err(e) => {
            let mut out = failed(job, req, FailureReason::AdapterError, e);
            env.reset();
            out.0.cleanup_hash = Some(env.observe().hash_hex());
            return out;
        }
    };
    let ctx = RunContext { run_id: &job.run_id, setup_id: &job.setup_id, app_ref: &job.app_ref };
    let run = run_verification(&mut req, env.as_mut(), adapter.as_mut(), cfg, &ctx);
    (run, req)
}

fn failed(job: &RunJob, mut req: Requirement, reason: FailureReason, detail: String) -> (VerificationRun, Requirement) {
    let mut run = VerificationRun::queued(&job.run_id, &job.setup_id, &job.requirement.id);
    run.fail_before_start(reason, detail);
    req.clear_verdicts();
    req.state = RequirementState::Failed;
    (run, req)
}

/// Runs the jobs with at most `cfg.parallelism` in flight, each holding a
/// leased display slot for its whole duration. Results come back in job
/// order; `on_done` sees each result before its status turns terminal.
pub fn run_jobs(
    jobs: Vec<RunJob>,
    backend: &dyn RunBackend,
    pool: &SlotPool,
    registry: &RunRegistry,
    cfg: &RunConfig,
    on_done: &(dyn Fn(&VerificationRun, &Requirement) + Sync),
) -> Vec<(VerificationRun, Requirement)> {
    let n = jobs.len();
    for j in &jobs {
        registry.enqueue(&j.run_id);
    }
    let queue: Mutex<VecDeque<(usize, RunJob, u32)>> =
        Mutex::new(jobs.into_iter().enumerate().map(|(i, j)| (i, j, 0)).collect());
    let results: Mutex<Vec<Option<(VerificationRun, Requirement)>>> = Mutex::new((0..n).map(|_| None).collect());
    let workers = cfg.parallelism.max(1).min(n.max(1));

    let worker = || loop {
        let Some((idx, job, attempts)) = queue.lock().unwrap_or_else(|p| p.into_inner()).pop_front() else {
            return;
        };
        let _ = registry.transition(&job.run_id, RunStatus::Leasing);
        let slot = match pool.acquire(&job.run_id, cfg.acquire_timeout()) {
            Ok(s) => s,
            Err(PoolError::PoolExhaustedTimeout(_)) if attempts + 1 < cfg.max_lease_attempts => {
                queue.lock().unwrap_or_else(|p| p.into_inner()).push_back((idx, job, attempts + 1));
                continue;
            }
            Err(e) => {
                let out = failed(&job, job.requirement.clone(), FailureReason::EnvironmentError, e.to_string());
                on_done(&out.0, &out.1);
                let _ = registry.transition(&job.run_id, RunStatus::Failed);
                results.lock().unwrap_or_else(|p| p.into_inner())[idx] = Some(out);
                continue;
            }
        };
        let guard = LeaseGuard { pool, slot_id: slot.slot_id, run_id: job.run_id.clone() };
        let _ = registry.transition(&job.run_id, RunStatus::Running);
        let out = match catch_unwind(AssertUnwindSafe(|| execute_job(&job, backend, cfg))) {
            Ok(out) => out,
            Err(panic) => {
                pool.mark_dead(&job.run_id);
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "run panicked".into());
                failed(&job, job.requirement.clone(), FailureReason::EnvironmentError, msg)
            }
        };
        drop(guard);
        // Persist before the status turns terminal so pollers never see a
        // finished run without its record.
        on_done(&out.0, &out.1);
        let _ = registry.transition(&job.run_id, out.0.status);
        results.lock().unwrap_or_else(|p| p.into_inner())[idx] = Some(out);
    };

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(worker);
        }
    });
    results
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|r| r.expect("every job produces a result"))
        .collect()
}
