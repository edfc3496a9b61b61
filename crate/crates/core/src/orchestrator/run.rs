use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::cost::compute_cost;
use crate::agentproto::{
    build_verification_prompt, check_evidence, parse_summary, Action, HistoryEntry, ModelAdapter, ModelReply, Turn,
    UsageStats, VerdictSummary,
};
use crate::guienv::{EnvWarning, Environment, Observation};
use crate::reqmodel::{Requirement, RequirementState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Leasing,
    Running,
    Succeeded,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Succeeded | RunStatus::Failed)
    }

    /// Position along Queued → Leasing → Running → terminal.
    pub fn rank(self) -> u8 {
        match self {
            RunStatus::Queued => 0,
            RunStatus::Leasing => 1,
            RunStatus::Running => 2,
            RunStatus::Succeeded | RunStatus::Failed => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    StepCapExceeded,
    SummaryParseFailure,
    ActionParseFailure,
    EnvironmentError,
    AdapterError,
}

mod action_line {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::agentproto::{parse_action, Action};

    pub fn serialize<S: Serializer>(a: &Action, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&a.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Action, D::Error> {
        let line = String::deserialize(d)?;
        parse_action(&line).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub index: usize,
    pub observation: Observation,
    pub reasoning: String,
    #[serde(with = "action_line")]
    pub action: Action,
    pub usage: UsageStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<EnvWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRun {
    pub run_id: String,
    pub requirement_id: String,
    pub setup_id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TrajectoryStep>,
    pub summary: Option<VerdictSummary>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub total_usage: UsageStats,
    #[serde(with = "rust_decimal::serde::str")]
    pub cost: Decimal,
    pub failure_reason: Option<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
    /// Environment state hash after post-run cleanup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleanup_hash: Option<String>,
}

impl VerificationRun {
    pub fn queued(run_id: &str, setup_id: &str, requirement_id: &str) -> Self {
        Self {
            run_id: run_id.into(),
            requirement_id: requirement_id.into(),
            setup_id: setup_id.into(),
            status: RunStatus::Queued,
            trajectory: Vec::new(),
            summary: None,
            started_at: None,
            finished_at: None,
            total_usage: UsageStats::default(),
            cost: Decimal::ZERO,
            failure_reason: None,
            failure_detail: None,
            cleanup_hash: None,
        }
    }

    /// Marks a run that could not even start.
    pub fn fail_before_start(&mut self, reason: FailureReason, detail: String) {
        let now = Utc::now();
        self.started_at.get_or_insert(now);
        self.finished_at = Some(now);
        self.status = RunStatus::Failed;
        self.failure_reason = Some(reason);
        self.failure_detail = Some(detail);
    }

    /// Digest of the trajectory, independent of timing.
    pub fn trajectory_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.trajectory).expect("trajectory serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn duration_secs(&self) -> f64 {
        match (self.started_at, self.finished_at) {
            (Some(s), Some(f)) => (f - s).num_microseconds().unwrap_or(0) as f64 / 1e6,
            _ => 0.0,
        }
    }
}

/// Identity of the run being executed.
#[derive(Debug, Clone)]
pub struct RunContext<'a> {
    pub run_id: &'a str,
    pub setup_id: &'a str,
    pub app_ref: &'a str,
}

type Failure = (FailureReason, String);

enum Decision {
    Act(ModelReply),
    Finish(ModelReply, VerdictSummary),
}

fn correction_text(detail: &str) -> String {
    format!(
        "Your previous reply was rejected: {detail}. Reply again with your reasoning and exactly one valid action on the last line."
    )
}

/// Obtains one usable reply for the current turn; a rejected reply earns
/// exactly one re-prompt carrying the error.
fn next_decision(
    adapter: &mut dyn ModelAdapter,
    req: &Requirement,
    prompt: &str,
    observation: &Observation,
    history: &[HistoryEntry],
    steps_so_far: usize,
    usage: &mut UsageStats,
) -> Result<Decision, Failure> {
    let mut correction: Option<String> = None;
    loop {
        let turn = Turn { prompt, observation, history, correction: correction.as_deref() };
        let raw = adapter.next_reply(&turn).map_err(|e| (FailureReason::AdapterError, e.to_string()))?;
        *usage += raw.usage;
        let rejected = match raw.parse() {
            Ok(reply) => match &reply.action {
                Action::Finish { summary_json } => {
                    // The finish step itself will be at index `steps_so_far`.
                    let checked = parse_summary(summary_json, req)
                        .and_then(|s| check_evidence(&s, steps_so_far + 1).map(|_| s));
                    match checked {
                        Ok(summary) => return Ok(Decision::Finish(reply, summary)),
                        Err(e) => (FailureReason::SummaryParseFailure, e.to_string()),
                    }
                }
                _ => return Ok(Decision::Act(reply)),
            },
            Err(e) => (FailureReason::ActionParseFailure, format!("'{}': {e}", raw.action)),
        };
        if correction.is_some() {
            return Err(rejected);
        }
        correction = Some(correction_text(&rejected.1));
    }
}

/// Runs one verification episode: observe, ask the model, act, until the
/// model finishes or the step cap is hit. The environment is reset before
/// and after the run regardless of outcome. On success the criterion
/// verdicts are written back to `req`; otherwise `req` ends up `Failed`.
pub fn run_verification(
    req: &mut Requirement,
    env: &mut dyn Environment,
    adapter: &mut dyn ModelAdapter,
    cfg: &RunConfig,
    ctx: &RunContext<'_>,
) -> VerificationRun {
    let mut run = VerificationRun::queued(ctx.run_id, ctx.setup_id, &req.id);
    run.status = RunStatus::Running;
    run.started_at = Some(Utc::now());

    env.reset();
    req.clear_verdicts();
    let prompt = build_verification_prompt(req, ctx.app_ref);
    let mut history: Vec<HistoryEntry> = Vec::new();

    let outcome: Result<VerdictSummary, Failure> = loop {
        let observation = env.observe();
        let mut usage = UsageStats::default();
        let decision = match next_decision(adapter, req, &prompt, &observation, &history, run.trajectory.len(), &mut usage) {
            Ok(d) => d,
            Err(f) => break Err(f),
        };
        let index = run.trajectory.len();
        match decision {
            Decision::Finish(reply, summary) => {
                run.trajectory.push(TrajectoryStep {
                    index,
                    observation,
                    reasoning: reply.reasoning,
                    action: reply.action,
                    usage,
                    warning: None,
                });
                break Ok(summary);
            }
            Decision::Act(reply) => {
                if index >= cfg.step_cap {
                    break Err((
                        FailureReason::StepCapExceeded,
                        format!("no finish within {} steps", cfg.step_cap),
                    ));
                }
                let warning = match env.execute(&reply.action) {
                    Ok(w) => w,
                    Err(e) => break Err((FailureReason::EnvironmentError, format!("{}: {e}", reply.action))),
                };
                history.push(HistoryEntry { reasoning: reply.reasoning.clone(), action: reply.action.to_string() });
                run.trajectory.push(TrajectoryStep {
                    index,
                    observation,
                    reasoning: reply.reasoning,
                    action: reply.action,
                    usage,
                    warning,
                });
            }
        }
    };

    env.reset();
    run.cleanup_hash = Some(env.observe().hash_hex());
    run.total_usage = run.trajectory.iter().map(|s| s.usage).sum();
    run.cost = compute_cost(run.total_usage, cfg.rates);
    run.finished_at = Some(Utc::now());

    match outcome {
        Ok(summary) => {
            for verdict in &summary.criteria {
                if let Some(c) = req.criteria.iter_mut().find(|c| c.id == verdict.id) {
                    c.verdict = verdict.verdict;
                    c.explanation = verdict.explanation.clone();
                    c.evidence = verdict.evidence.clone();
                }
            }
            req.state = summary.overall.into();
            run.summary = Some(summary);
            run.status = RunStatus::Succeeded;
        }
        Err((reason, detail)) => {
            req.state = RequirementState::Failed;
            run.status = RunStatus::Failed;
            run.failure_reason = Some(reason);
            run.failure_detail = Some(detail);
        }
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::agentproto::{ReplayAdapter, ScriptEntry};
    use crate::guienv::{SimApp, SimEnvironment};
    use crate::reqmodel::{parse_requirements_structured, Verdict};

    fn app() -> Arc<SimApp> {
        Arc::new(
            SimApp::from_json(
                r#"{"app_id":"t","viewport":{"width":100,"height":100},"initial_screen":"a",
                "screens":{"a":{"widgets":[{"id":"go","kind":"button","label":"Go","bounds":{"x":0,"y":0,"w":40,"h":20},
                  "on_click":[{"op":"navigate","to":"b"}]}]},"b":{"widgets":[]}}}"#,
            )
            .unwrap(),
        )
    }

    fn req() -> Requirement {
        parse_requirements_structured("REQ: r\nAC: a\nAC: b").unwrap().remove(0)
    }

    fn entry(action: &str) -> ScriptEntry {
        ScriptEntry { reasoning: "why".into(), action: action.into(), usage: crate::agentproto::UsageStats::new(10, 2), expect_hash: None }
    }

    fn finish(v1: &str, v2: &str, evidence: usize) -> String {
        format!(
            r#"finish({{"requirement_id":"req-1","overall":"met","criteria":[{{"id":"ac-1","verdict":"{v1}","explanation":"e1","evidence":[{evidence}]}},{{"id":"ac-2","verdict":"{v2}","explanation":"e2","evidence":[]}}],"narrative":"n"}})"#
        )
    }

    fn ctx() -> RunContext<'static> {
        RunContext { run_id: "run-1", setup_id: "setup-1", app_ref: "mem://t" }
    }

    fn run(script: Vec<ScriptEntry>, cfg: &RunConfig) -> (VerificationRun, Requirement, SimEnvironment) {
        let mut env = SimEnvironment::new(app());
        let mut r = req();
        let mut adapter = ReplayAdapter::new(script);
        let run = run_verification(&mut r, &mut env, &mut adapter, cfg, &ctx());
        (run, r, env)
    }

    #[test]
    fn successful_run_writes_verdicts_back() {
        let (run, r, env) =
            run(vec![entry("click(5, 5)"), entry(&finish("met", "unmet", 1))], &RunConfig::default());
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(run.trajectory.len(), 2);
        assert!(run.trajectory.last().unwrap().action.is_finish());
        assert_eq!(r.state, RequirementState::PartiallyMet);
        assert_eq!(r.criteria[0].verdict, Verdict::Met);
        assert_eq!(r.criteria[0].evidence, vec![1]);
        assert_eq!(r.criteria[1].explanation, "e2");
        assert_eq!(run.total_usage, crate::agentproto::UsageStats::new(20, 4));
        assert_eq!(run.cleanup_hash.as_deref(), Some(env.observe().hash_hex().as_str()));
        assert_eq!(env.state().current_screen, "a");
    }

    #[test]
    fn unknown_verb_twice_fails_after_one_reprompt() {
        let (run, r, _) = run(vec![entry("swipe(1, 2)"), entry("swipe(1, 2)"), entry("wait(1)")], &RunConfig::default());
        assert_eq!(run.status, RunStatus::Failed);
        assert_eq!(run.failure_reason, Some(FailureReason::ActionParseFailure));
        assert!(run.trajectory.is_empty());
        assert_eq!(r.state, RequirementState::Failed);
    }

    #[test]
    fn one_bad_action_is_forgiven() {
        let (run, _, _) = run(vec![entry("swipe(1, 2)"), entry(&finish("met", "met", 0))], &RunConfig::default());
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(run.trajectory[0].usage, crate::agentproto::UsageStats::new(20, 4));
    }

    #[test]
    fn bad_summary_twice_fails() {
        let bad = r#"finish({"requirement_id":"req-1","overall":"met","criteria":[],"narrative":""})"#;
        let (run, r, _) = run(vec![entry(bad), entry(bad)], &RunConfig::default());
        assert_eq!(run.failure_reason, Some(FailureReason::SummaryParseFailure));
        assert_eq!(r.state, RequirementState::Failed);
        assert!(r.criteria.iter().all(|c| c.verdict == Verdict::Unknown));
    }

    #[test]
    fn evidence_beyond_trajectory_is_rejected() {
        let (run, _, _) = run(vec![entry(&finish("met", "met", 3)), entry(&finish("met", "met", 3))], &RunConfig::default());
        assert_eq!(run.failure_reason, Some(FailureReason::SummaryParseFailure));
    }

    #[test]
    fn step_cap_stops_the_run() {
        let cfg = RunConfig { step_cap: 2, ..RunConfig::default() };
        let script = (0..5).map(|_| entry("wait(1)")).collect();
        let (run, r, _) = run(script, &cfg);
        assert_eq!(run.failure_reason, Some(FailureReason::StepCapExceeded));
        assert_eq!(run.trajectory.len(), 2);
        assert_eq!(r.state, RequirementState::Failed);
    }

    #[test]
    fn finish_may_follow_a_full_cap() {
        let cfg = RunConfig { step_cap: 2, ..RunConfig::default() };
        let (run, _, _) = run(vec![entry("wait(1)"), entry("wait(1)"), entry(&finish("met", "met", 2))], &cfg);
        assert_eq!(run.status, RunStatus::Succeeded);
        assert_eq!(run.trajectory.len(), 3);
    }

    #[test]
    fn environment_error_fails_and_cleans_up() {
        let (run, _, env) = run(vec![entry("click(5, 5)"), entry("click(500, 5)")], &RunConfig::default());
        assert_eq!(run.failure_reason, Some(FailureReason::EnvironmentError));
        assert_eq!(env.state().step_count, 0);
        assert_eq!(env.state().current_screen, "a");
    }

    #[test]
    fn exhausted_script_is_adapter_error() {
        let (run, _, _) = run(vec![], &RunConfig::default());
        assert_eq!(run.failure_reason, Some(FailureReason::AdapterError));
    }
}
