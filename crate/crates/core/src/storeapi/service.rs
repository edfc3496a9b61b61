use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::{SetupRecord, Store, StoreError};
use crate::agentproto::{ModelAdapter, ReplayAdapter};
use crate::guienv::{load_app, oracle_agent, AppError, Environment, PlanSet, SimApp, SimEnvironment};
use crate::orchestrator::{
    run_jobs, RunBackend, RunConfig, RunJob, RunRegistry, RunStatus, SlotPool, TrajectoryStep, VerificationRun,
};
use crate::reqmodel::{parse_requirements_structured, ReqError, Requirement, RequirementState};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown setup {0}")]
    UnknownSetup(String),
    #[error("unknown requirement {0}")]
    UnknownRequirement(String),
    #[error("requirement id {0} exists in several setups; pass setup_id")]
    AmbiguousRequirement(String),
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("requirement {requirement_id} is already being verified by {run_id}")]
    AlreadyRunning { requirement_id: String, run_id: String },
    #[error("requirement {0} has no completed verification")]
    NeverVerified(String),
    #[error("an autonomy loop is already running for setup {0}")]
    LoopInProgress(String),
    #[error(transparent)]
    Malformed(#[from] ReqError),
    #[error("cannot load app: {0}")]
    App(#[from] AppError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Builds the model adapter for one run against a freshly loaded app.
pub trait AdapterFactory: Send + Sync {
    fn adapter(&self, app: &SimApp, req: &Requirement) -> Result<Box<dyn ModelAdapter>, String>;
}

/// Scripted agents compiled from oracle plans, selected by app id.
pub struct OracleFactory {
    plans: BTreeMap<String, PlanSet>,
}

impl OracleFactory {
    pub fn new(sets: impl IntoIterator<Item = PlanSet>) -> Self {
        Self { plans: sets.into_iter().map(|p| (p.app_id.clone(), p)).collect() }
    }
}

impl AdapterFactory for OracleFactory {
    fn adapter(&self, app: &SimApp, req: &Requirement) -> Result<Box<dyn ModelAdapter>, String> {
        let plans = self.plans.get(&app.app_id).ok_or_else(|| format!("no oracle plans for app {}", app.app_id))?;
        Ok(Box::new(oracle_agent(app, req, plans).map_err(|e| e.to_string())?))
    }
}

/// Replays `<dir>/<app_id>/<requirement_id>.json`.
pub struct ScriptDirFactory {
    dir: PathBuf,
}

impl ScriptDirFactory {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl AdapterFactory for ScriptDirFactory {
    fn adapter(&self, app: &SimApp, req: &Requirement) -> Result<Box<dyn ModelAdapter>, String> {
        let path = self.dir.join(&app.app_id).join(format!("{}.json", req.id));
        Ok(Box::new(ReplayAdapter::from_file(&path).map_err(|e| format!("{}: {e}", path.display()))?))
    }
}

struct Backend {
    factory: Arc<dyn AdapterFactory>,
}

impl RunBackend for Backend {
    fn environment(&self, job: &RunJob) -> Result<Box<dyn Environment>, String> {
        let app = load_app(Path::new(&job.app_ref)).map_err(|e| e.to_string())?;
        Ok(Box::new(SimEnvironment::new(Arc::new(app))))
    }

    fn adapter(&self, job: &RunJob) -> Result<Box<dyn ModelAdapter>, String> {
        let app = load_app(Path::new(&job.app_ref)).map_err(|e| e.to_string())?;
        self.factory.adapter(&app, &job.requirement)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCriterion {
    pub id: String,
    pub text: String,
    pub explanation: String,
    pub evidence_steps: Vec<usize>,
}

/// What a programming agent needs to repair a requirement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub setup_id: String,
    pub requirement_id: String,
    pub run_id: String,
    pub state: RequirementState,
    pub failed_criteria: Vec<FailedCriterion>,
    pub narrative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatusView {
    pub run_id: String,
    pub setup_id: String,
    pub requirement_id: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<crate::orchestrator::FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPage {
    pub run_id: String,
    pub page: usize,
    pub page_size: usize,
    pub total_steps: usize,
    pub total_pages: usize,
    pub steps: Vec<TrajectoryStep>,
}

#[derive(Default)]
struct Active {
    /// (setup, requirement) → in-flight run.
    by_requirement: BTreeMap<(String, String), String>,
    /// in-flight run → (setup, requirement).
    by_run: BTreeMap<String, (String, String)>,
}

/// Shared application service behind the HTTP API and the tool server.
pub struct Service {
    store: Mutex<Store>,
    registry: RunRegistry,
    pool: SlotPool,
    cfg: RunConfig,
    factory: Arc<dyn AdapterFactory>,
    active: Mutex<Active>,
    finished: Condvar,
    loops: Mutex<BTreeSet<String>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    pub fn new(store: Store, cfg: RunConfig, factory: Arc<dyn AdapterFactory>) -> Arc<Self> {
        let pool = SlotPool::new(cfg.slots, cfg.lease_ttl());
        Arc::new(Self {
            store: Mutex::new(store),
            registry: RunRegistry::new(),
            pool,
            cfg,
            factory,
            active: Mutex::new(Active::default()),
            finished: Condvar::new(),
            loops: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &RunRegistry {
        &self.registry
    }

    pub fn pool(&self) -> &SlotPool {
        &self.pool
    }

    /// Parses block-format requirements and registers them against an app.
    pub fn create_setup(&self, app_ref: &str, requirements_text: &str) -> Result<SetupRecord, ServiceError> {
        let reqs = parse_requirements_structured(requirements_text)?;
        load_app(Path::new(app_ref))?;
        Ok(lock(&self.store).create_setup(app_ref, reqs)?)
    }

    pub fn list_setups(&self) -> Vec<SetupRecord> {
        lock(&self.store).setups().cloned().collect()
    }

    pub fn setup(&self, setup_id: &str) -> Result<SetupRecord, ServiceError> {
        lock(&self.store).setup(setup_id).cloned().ok_or_else(|| ServiceError::UnknownSetup(setup_id.into()))
    }

    pub fn requirements(&self, setup_id: &str) -> Result<Vec<Requirement>, ServiceError> {
        Ok(self.setup(setup_id)?.requirements)
    }

    /// Finds the setup holding `requirement_id`; `setup_id` may be omitted
    /// when exactly one setup has such a requirement.
    pub fn resolve_requirement(&self, setup_id: Option<&str>, requirement_id: &str) -> Result<(String, Requirement), ServiceError> {
        let store = lock(&self.store);
        if let Some(sid) = setup_id {
            let rec = store.setup(sid).ok_or_else(|| ServiceError::UnknownSetup(sid.into()))?;
            let req = rec.requirements.iter().find(|r| r.id == requirement_id);
            return req.map(|r| (sid.to_string(), r.clone())).ok_or_else(|| ServiceError::UnknownRequirement(requirement_id.into()));
        }
        let mut hits = store
            .setups()
            .filter_map(|rec| rec.requirements.iter().find(|r| r.id == requirement_id).map(|r| (rec.setup.id.clone(), r.clone())));
        match (hits.next(), hits.next()) {
            (Some(hit), None) => Ok(hit),
            (Some(_), Some(_)) => Err(ServiceError::AmbiguousRequirement(requirement_id.into())),
            (None, _) => Err(ServiceError::UnknownRequirement(requirement_id.into())),
        }
    }

    /// Queues one run per requirement (all of the setup's when `ids` is
    /// `None`) and returns their run ids without waiting.
    pub fn start_verification(
        self: &Arc<Self>,
        setup_id: &str,
        ids: Option<&[String]>,
        parallelism: Option<usize>,
    ) -> Result<Vec<String>, ServiceError> {
        if parallelism == Some(0) {
            return Err(ServiceError::BadRequest("parallelism must be at least 1".into()));
        }
        let mut store = lock(&self.store);
        let rec = store.setup(setup_id).cloned().ok_or_else(|| ServiceError::UnknownSetup(setup_id.into()))?;
        let selected: Vec<Requirement> = match ids {
            None => rec.requirements.clone(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    rec.requirements.iter().find(|r| &r.id == id).cloned().ok_or_else(|| ServiceError::UnknownRequirement(id.clone()))
                })
                .collect::<Result<_, _>>()?,
        };
        let mut active = lock(&self.active);
        for r in &selected {
            if let Some(run_id) = active.by_requirement.get(&(setup_id.to_string(), r.id.clone())) {
                return Err(ServiceError::AlreadyRunning { requirement_id: r.id.clone(), run_id: run_id.clone() });
            }
        }
        let mut jobs = Vec::new();
        let mut seen = BTreeSet::new();
        for r in selected {
            if !seen.insert(r.id.clone()) {
                continue;
            }
            let run_id = store.allocate_run_id();
            let key = (setup_id.to_string(), r.id.clone());
            active.by_requirement.insert(key.clone(), run_id.clone());
            active.by_run.insert(run_id.clone(), key);
            self.registry.enqueue(&run_id);
            jobs.push(RunJob { run_id, setup_id: setup_id.into(), app_ref: rec.setup.app_ref.clone(), requirement: r });
        }
        drop(active);
        drop(store);

        let run_ids: Vec<String> = jobs.iter().map(|j| j.run_id.clone()).collect();
        let mut cfg = self.cfg.clone();
        if let Some(p) = parallelism {
            cfg.parallelism = p;
        }
        let svc = Arc::clone(self);
        std::thread::spawn(move || {
            let backend = Backend { factory: svc.factory.clone() };
            run_jobs(jobs, &backend, &svc.pool, &svc.registry, &cfg, &|run, req| svc.complete(run, req));
        });
        Ok(run_ids)
    }

    fn complete(&self, run: &VerificationRun, req: &Requirement) {
        {
            let mut store = lock(&self.store);
            if let Err(e) = store.persist_run(run) {
                eprintln!("reqcheck: cannot persist {}: {e}", run.run_id);
            }
            if let Err(e) = store.update_requirement(&run.setup_id, req) {
                eprintln!("reqcheck: cannot update {}: {e}", req.id);
            }
        }
        let mut active = lock(&self.active);
        if let Some(key) = active.by_run.remove(&run.run_id) {
            active.by_requirement.remove(&key);
        }
        drop(active);
        self.finished.notify_all();
    }

    fn pending(&self, run_id: &str) -> Option<(String, String)> {
        lock(&self.active).by_run.get(run_id).cloned()
    }

    pub fn run(&self, run_id: &str) -> Result<VerificationRun, ServiceError> {
        if let Some((setup_id, req_id)) = self.pending(run_id) {
            let mut run = VerificationRun::queued(run_id, &setup_id, &req_id);
            run.status = self.registry.status(run_id).unwrap_or(RunStatus::Queued);
            return Ok(run);
        }
        lock(&self.store).run(run_id)?.ok_or_else(|| ServiceError::UnknownRun(run_id.into()))
    }

    pub fn run_status(&self, run_id: &str) -> Result<RunStatusView, ServiceError> {
        if let Some((setup_id, requirement_id)) = self.pending(run_id) {
            let status = self.registry.status(run_id).unwrap_or(RunStatus::Queued);
            return Ok(RunStatusView { run_id: run_id.into(), setup_id, requirement_id, status, failure_reason: None });
        }
        let run = self.run(run_id)?;
        Ok(RunStatusView {
            run_id: run.run_id,
            setup_id: run.setup_id,
            requirement_id: run.requirement_id,
            status: run.status,
            failure_reason: run.failure_reason,
        })
    }

    /// Steps `page` (1-based) of `page_size` from a run's trajectory.
    pub fn trajectory(&self, run_id: &str, page: usize, page_size: usize) -> Result<TrajectoryPage, ServiceError> {
        if page == 0 || page_size == 0 {
            return Err(ServiceError::BadRequest("page and page_size start at 1".into()));
        }
        let run = self.run(run_id)?;
        let total_steps = run.trajectory.len();
        let steps = run.trajectory.into_iter().skip((page - 1).saturating_mul(page_size)).take(page_size).collect();
        Ok(TrajectoryPage {
            run_id: run_id.into(),
            page,
            page_size,
            total_steps,
            total_pages: total_steps.div_ceil(page_size),
            steps,
        })
    }

    /// Blocks until the run is persisted or `timeout` elapses.
    pub fn wait(&self, run_id: &str, timeout: Duration) -> Result<VerificationRun, ServiceError> {
        let give_up = Instant::now() + timeout;
        let mut active = lock(&self.active);
        while active.by_run.contains_key(run_id) {
            let left = give_up.saturating_duration_since(Instant::now());
            if left.is_zero() {
                drop(active);
                return self.run(run_id);
            }
            active = self.finished.wait_timeout(active, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        drop(active);
        self.run(run_id)
    }

    pub fn active_run(&self, setup_id: &str, requirement_id: &str) -> Option<String> {
        lock(&self.active).by_requirement.get(&(setup_id.to_string(), requirement_id.to_string())).cloned()
    }

    /// Unmet criteria of the latest successful run of a requirement.
    pub fn feedback(&self, setup_id: Option<&str>, requirement_id: &str) -> Result<Feedback, ServiceError> {
        let (setup_id, req) = self.resolve_requirement(setup_id, requirement_id)?;
        let store = lock(&self.store);
        for run_id in store.runs_for(&setup_id, requirement_id).iter().rev() {
            let Some(run) = store.run(run_id)? else { continue };
            let (RunStatus::Succeeded, Some(summary)) = (run.status, run.summary) else { continue };
            let failed_criteria = summary
                .unmet()
                .map(|v| FailedCriterion {
                    id: v.id.clone(),
                    text: req.criterion(&v.id).map(|c| c.text.clone()).unwrap_or_default(),
                    explanation: v.explanation.clone(),
                    evidence_steps: v.evidence.clone(),
                })
                .collect();
            return Ok(Feedback {
                setup_id,
                requirement_id: requirement_id.into(),
                run_id: run.run_id,
                state: summary.overall.into(),
                failed_criteria,
                narrative: summary.narrative,
            });
        }
        Err(ServiceError::NeverVerified(requirement_id.into()))
    }

    /// Claims the single autonomy-loop slot of a setup until the guard drops.
    pub fn claim_loop(&self, setup_id: &str) -> Result<LoopClaim<'_>, ServiceError> {
        if !lock(&self.loops).insert(setup_id.to_string()) {
            return Err(ServiceError::LoopInProgress(setup_id.into()));
        }
        Ok(LoopClaim { svc: self, setup_id: setup_id.into() })
    }
}

pub struct LoopClaim<'a> {
    svc: &'a Service,
    setup_id: String,
}

impl Drop for LoopClaim<'_> {
    fn drop(&mut self) {
        lock(&self.svc.loops).remove(&self.setup_id);
    }
}
