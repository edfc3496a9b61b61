use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::orchestrator::RunStatus;
use crate::reqmodel::RequirementState;
use crate::storeapi::{Feedback, Service, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopOutcome {
    AlreadyMet,
    Converged,
    MaxItersExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopEntry {
    pub requirement_id: String,
    pub verifications: usize,
    pub fixer_calls: usize,
    pub final_state: RequirementState,
    pub outcome: LoopOutcome,
    pub run_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopReport {
    pub setup_id: String,
    pub entries: Vec<LoopEntry>,
}

impl LoopReport {
    pub fn all_met(&self) -> bool {
        self.entries.iter().all(|e| e.final_state == RequirementState::Met)
    }
}

const RUN_WAIT: Duration = Duration::from_secs(24 * 3600);

fn verify_once(svc: &Arc<Service>, setup_id: &str, req_id: &str) -> Result<(String, RequirementState, Feedback), ServiceError> {
    let ids = svc.start_verification(setup_id, Some(&[req_id.to_string()]), Some(1))?;
    let run = svc.wait(&ids[0], RUN_WAIT)?;
    let state = svc.resolve_requirement(Some(setup_id), req_id)?.1.state;
    let feedback = match run.status {
        RunStatus::Succeeded => svc.feedback(Some(setup_id), req_id)?,
        _ => Feedback {
            setup_id: setup_id.into(),
            requirement_id: req_id.into(),
            run_id: run.run_id.clone(),
            state: RequirementState::Failed,
            failed_criteria: Vec::new(),
            narrative: run.failure_detail.clone().unwrap_or_default(),
        },
    };
    Ok((run.run_id, state, feedback))
}

/// For every requirement not yet met, in ingestion order: verify, and while
/// it is not met hand the feedback to `fixer` and verify again, giving up
/// after `max_iters` fixes. Each requirement gets at most `max_iters + 1`
/// verifications.
pub fn autonomy_loop(
    svc: &Arc<Service>,
    setup_id: &str,
    fixer: &mut dyn FnMut(&Feedback),
    max_iters: usize,
) -> Result<LoopReport, ServiceError> {
    let _claim = svc.claim_loop(setup_id)?;
    let mut entries = Vec::new();
    for req in svc.requirements(setup_id)? {
        if req.state == RequirementState::Met {
            entries.push(LoopEntry {
                requirement_id: req.id,
                verifications: 0,
                fixer_calls: 0,
                final_state: RequirementState::Met,
                outcome: LoopOutcome::AlreadyMet,
                run_ids: Vec::new(),
            });
            continue;
        }
        let mut entry = LoopEntry {
            requirement_id: req.id.clone(),
            verifications: 0,
            fixer_calls: 0,
            final_state: req.state,
            outcome: LoopOutcome::MaxItersExceeded,
            run_ids: Vec::new(),
        };
        loop {
            let (run_id, state, feedback) = verify_once(svc, setup_id, &req.id)?;
            entry.verifications += 1;
            entry.run_ids.push(run_id);
            entry.final_state = state;
            if state == RequirementState::Met {
                entry.outcome = LoopOutcome::Converged;
                break;
            }
            if entry.fixer_calls >= max_iters {
                break;
            }
            fixer(&feedback);
            entry.fixer_calls += 1;
        }
        entries.push(entry);
    }
    Ok(LoopReport { setup_id: setup_id.into(), entries })
}
