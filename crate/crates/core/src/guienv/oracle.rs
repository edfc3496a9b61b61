//! Scripted oracle agent.
//!
//! A plan is a list of widget-level steps and checks for one requirement.
//! Compiling a plan steps the simulator, turning every step into a replay
//! script entry pinned to the state hash it expects, and evaluates the checks
//! against the live state to produce the final summary.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::app::{SimApp, WidgetKind};
use super::sim::{EnvError, SimState};
use crate::agentproto::{Action, ReplayAdapter, ScriptEntry, UsageStats};
use crate::reqmodel::{derive_requirement_state, Requirement, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    /// The current screen id.
    Screen(String),
    /// Displayed text of a widget on the current screen.
    Text { widget: String, equals: String },
    /// Number of records behind a list view on the current screen.
    Rows { widget: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub ac: String,
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanOp {
    /// Click the center of a widget on the current screen.
    Click(String),
    /// Click a text input, then type into it.
    Fill { widget: String, text: String },
    Scroll { widget: String, dy: i32 },
    /// A raw action line.
    Do(String),
    Check(Check),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    #[serde(flatten)]
    pub op: PlanOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub why: Option<String>,
}

/// Plans for the requirements of one app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSet {
    pub app_id: String,
    pub plans: BTreeMap<String, Vec<PlanStep>>,
}

impl PlanSet {
    pub fn load(path: &Path) -> Result<PlanSet, PlanError> {
        let text = std::fs::read_to_string(path).map_err(|e| PlanError::Load(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PlanError::Load(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("cannot load plans: {0}")]
    Load(String),
    #[error("no plan for requirement {0}")]
    NoPlan(String),
    #[error("widget '{widget}' is not on screen '{screen}'")]
    UnknownWidget { screen: String, widget: String },
    #[error("plan action '{0}' does not parse")]
    BadAction(String),
    #[error("plan never checks criterion {0}")]
    UncheckedCriterion(String),
    #[error("plan checks unknown criterion {0}")]
    UnknownCriterion(String),
    #[error("plan step failed in the simulator: {0}")]
    Env(#[from] EnvError),
}

#[derive(Default)]
struct Finding {
    passed: bool,
    notes: Vec<String>,
    evidence: Vec<usize>,
}

/// Evaluates an expectation against the current state; returns whether it
/// holds and a sentence describing what was observed.
pub fn evaluate(app: &SimApp, state: &SimState, expect: &Expect) -> (bool, String) {
    let screen = &state.current_screen;
    let find = |id: &str| app.widget(screen, id);
    match expect {
        Expect::Screen(want) => {
            if want == screen {
                (true, format!("screen '{want}' is shown"))
            } else {
                (false, format!("expected screen '{want}' but screen '{screen}' is shown"))
            }
        }
        Expect::Text { widget, equals } => match find(widget) {
            None => (false, format!("'{widget}' is not shown on screen '{screen}'")),
            Some(w) => {
                let got = state.display_text(w);
                if &got == equals {
                    (true, format!("'{widget}' shows \"{got}\""))
                } else {
                    (false, format!("expected '{widget}' to show \"{equals}\" but it shows \"{got}\""))
                }
            }
        },
        Expect::Rows { widget, count } => match find(widget) {
            Some(w) if w.kind == WidgetKind::ListView => {
                let got = state.row_count(w);
                if got == *count {
                    (true, format!("'{widget}' lists {got} row(s)"))
                } else {
                    (false, format!("expected '{widget}' to list {count} row(s) but it lists {got}"))
                }
            }
            _ => (false, format!("list '{widget}' is not shown on screen '{screen}'")),
        },
    }
}

fn synthetic_usage(turn: usize, rendering: &str, reasoning: &str, action: &str) -> UsageStats {
    UsageStats::new(
        1_000 + rendering.len() as u64 / 4 + 40 * turn as u64,
        12 + (reasoning.len() + action.len()) as u64 / 4,
    )
}

/// Steps the simulator through `plan` and returns the replay script an
/// ideal agent would produce, ending in a finish action with the summary.
pub fn compile_plan(app: &SimApp, req: &Requirement, plan: &[PlanStep]) -> Result<Vec<ScriptEntry>, PlanError> {
    let mut state = SimState::reset(app);
    let mut entries = Vec::new();
    let mut findings: BTreeMap<&str, Finding> = BTreeMap::new();

    let emit = |state: &mut SimState, entries: &mut Vec<ScriptEntry>, action: Action, why: String| {
        let obs = state.observe(app);
        let line = action.to_string();
        entries.push(ScriptEntry {
            usage: synthetic_usage(entries.len(), &obs.rendering, &why, &line),
            reasoning: why,
            action: line,
            expect_hash: Some(obs.hash_hex()),
        });
        state.execute(app, &action).map(|_| ())
    };
    let center_of = |state: &SimState, widget: &str| {
        app.widget(&state.current_screen, widget).map(|w| w.bounds.center()).ok_or_else(|| {
            PlanError::UnknownWidget { screen: state.current_screen.clone(), widget: widget.to_string() }
        })
    };

    for step in plan {
        let why = step.why.clone();
        match &step.op {
            PlanOp::Click(widget) => {
                let (x, y) = center_of(&state, widget)?;
                let why = why.unwrap_or_else(|| format!("Click '{widget}'."));
                emit(&mut state, &mut entries, Action::Click { x, y }, why)?;
            }
            PlanOp::Fill { widget, text } => {
                let (x, y) = center_of(&state, widget)?;
                let why = why.unwrap_or_else(|| format!("Focus '{widget}' to enter \"{text}\"."));
                emit(&mut state, &mut entries, Action::Click { x, y }, why)?;
                emit(&mut state, &mut entries, Action::Type { text: text.clone() }, format!("Type \"{text}\"."))?;
            }
            PlanOp::Scroll { widget, dy } => {
                let (x, y) = center_of(&state, widget)?;
                let why = why.unwrap_or_else(|| format!("Scroll '{widget}'."));
                emit(&mut state, &mut entries, Action::Scroll { x, y, dx: 0, dy: *dy }, why)?;
            }
            PlanOp::Do(line) => {
                let action = crate::agentproto::parse_action(line).map_err(|_| PlanError::BadAction(line.clone()))?;
                emit(&mut state, &mut entries, action, why.unwrap_or_default())?;
            }
            PlanOp::Check(check) => {
                let ac = req
                    .criteria
                    .iter()
                    .find(|c| c.id == check.ac)
                    .ok_or_else(|| PlanError::UnknownCriterion(check.ac.clone()))?;
                let (ok, note) = evaluate(app, &state, &check.expect);
                let f = findings.entry(ac.id.as_str()).or_insert_with(|| Finding { passed: true, ..Finding::default() });
                f.passed &= ok;
                f.notes.push(format!("At step {}, {note}.", entries.len()));
                if !f.evidence.contains(&entries.len()) {
                    f.evidence.push(entries.len());
                }
            }
        }
    }

    let mut criteria = Vec::new();
    let mut verdicts = Vec::new();
    for c in &req.criteria {
        let f = findings.get(c.id.as_str()).ok_or_else(|| PlanError::UncheckedCriterion(c.id.clone()))?;
        let verdict = if f.passed { Verdict::Met } else { Verdict::Unmet };
        verdicts.push(verdict);
        criteria.push(json!({
            "id": c.id,
            "verdict": if f.passed { "met" } else { "unmet" },
            "explanation": f.notes.join(" "),
            "evidence": f.evidence,
        }));
    }
    let overall = derive_requirement_state(&verdicts).expect("requirement has criteria");
    let met = verdicts.iter().filter(|v| **v == Verdict::Met).count();
    let summary = json!({
        "requirement_id": req.id,
        "overall": overall.as_str(),
        "criteria": criteria,
        "narrative": format!("{met} of {} acceptance criteria of '{}' are met.", verdicts.len(), req.title),
    });
    let obs = state.observe(app);
    let action = Action::Finish { summary_json: summary.to_string() }.to_string();
    let reasoning = "All acceptance criteria have been checked.".to_string();
    entries.push(ScriptEntry {
        usage: synthetic_usage(entries.len(), &obs.rendering, &reasoning, &action),
        reasoning,
        action,
        expect_hash: Some(obs.hash_hex()),
    });
    Ok(entries)
}

/// Compiles the plan for `req` into a replay adapter.
pub fn oracle_agent(app: &SimApp, req: &Requirement, plans: &PlanSet) -> Result<ReplayAdapter, PlanError> {
    let plan = plans.plans.get(&req.id).ok_or_else(|| PlanError::NoPlan(req.id.clone()))?;
    compile_plan(app, req, plan).map(ReplayAdapter::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reqmodel::parse_requirements_structured;

    fn app() -> SimApp {
        SimApp::from_json(
            r#"{"app_id":"t","viewport":{"width":100,"height":100},"initial_screen":"a",
                "screens":{"a":{"widgets":[{"id":"go","kind":"button","label":"Go","bounds":{"x":0,"y":0,"w":40,"h":20},
                  "on_click":[{"op":"navigate","to":"b"}]}]},
                  "b":{"widgets":[{"id":"msg","kind":"label","label":"Hello","bounds":{"x":0,"y":0,"w":40,"h":20}}]}}}"#,
        )
        .unwrap()
    }

    fn plan(json: &str) -> Vec<PlanStep> {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn compiles_clicks_and_checks() {
        let req = parse_requirements_structured("REQ: r\nAC: goes to b\nAC: greets").unwrap().remove(0);
        let p = plan(
            r#"[{"click":"go"},{"check":{"ac":"ac-1","expect":{"screen":"b"}}},
                {"check":{"ac":"ac-2","expect":{"text":{"widget":"msg","equals":"Bye"}}}}]"#,
        );
        let script = compile_plan(&app(), &req, &p).unwrap();
        assert_eq!(script.len(), 2);
        assert_eq!(script[0].action, "click(20, 10)");
        let summary = crate::agentproto::parse_summary(
            script[1].action.strip_prefix("finish(").unwrap().strip_suffix(')').unwrap(),
            &req,
        )
        .unwrap();
        assert_eq!(summary.criteria[0].verdict, Verdict::Met);
        assert_eq!(summary.criteria[1].verdict, Verdict::Unmet);
        assert!(summary.criteria[1].explanation.contains("shows \"Hello\""));
        assert_eq!(summary.criteria[1].evidence, vec![1]);
    }

    #[test]
    fn unchecked_criterion_is_an_error() {
        let req = parse_requirements_structured("REQ: r\nAC: a\nAC: b").unwrap().remove(0);
        let p = plan(r#"[{"check":{"ac":"ac-1","expect":{"screen":"a"}}}]"#);
        assert_eq!(compile_plan(&app(), &req, &p), Err(PlanError::UncheckedCriterion("ac-2".into())));
    }

    #[test]
    fn unknown_widget_is_an_error() {
        let req = parse_requirements_structured("REQ: r\nAC: a").unwrap().remove(0);
        let p = plan(r#"[{"click":"msg"}]"#);
        assert!(matches!(compile_plan(&app(), &req, &p), Err(PlanError::UnknownWidget { .. })));
    }
}
