//! Requirements, acceptance criteria and the rule that turns per-criterion
//! verdicts into a requirement state.
//!
//! Requirements enter the system either through the line-oriented block
//! format (`REQ:` / `DESC:` / `AC:` / `DATA:`) or through a completion model
//! that is asked to emit the requirement JSON schema.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agentproto::CompletionModel;

/// Verdict on a single acceptance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Met,
    Unmet,
    #[default]
    Unknown,
}

/// The three-class outcome derived from a complete set of verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    // Declaration order is the ordinal order used by agreement metrics.
    Unmet,
    PartiallyMet,
    Met,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Met => "met",
            Outcome::PartiallyMet => "partially_met",
            Outcome::Unmet => "unmet",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "met" => Some(Outcome::Met),
            "partially_met" => Some(Outcome::PartiallyMet),
            "unmet" => Some(Outcome::Unmet),
            _ => None,
        }
    }

    /// Ordinal code: unmet=0, partially_met=1, met=2.
    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RequirementState {
    #[default]
    Unverified,
    Met,
    PartiallyMet,
    Unmet,
    Failed,
}

impl From<Outcome> for RequirementState {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Met => RequirementState::Met,
            Outcome::PartiallyMet => RequirementState::PartiallyMet,
            Outcome::Unmet => RequirementState::Unmet,
        }
    }
}

impl RequirementState {
    pub fn as_str(self) -> &'static str {
        match self {
            RequirementState::Unverified => "unverified",
            RequirementState::Met => "met",
            RequirementState::PartiallyMet => "partially_met",
            RequirementState::Unmet => "unmet",
            RequirementState::Failed => "failed",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "unverified" => Some(RequirementState::Unverified),
            "failed" => Some(RequirementState::Failed),
            other => Outcome::parse(other).map(Into::into),
        }
    }

    pub fn outcome(self) -> Option<Outcome> {
        match self {
            RequirementState::Met => Some(Outcome::Met),
            RequirementState::PartiallyMet => Some(Outcome::PartiallyMet),
            RequirementState::Unmet => Some(Outcome::Unmet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceCriterion {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub verdict: Verdict,
    #[serde(default)]
    pub explanation: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

impl AcceptanceCriterion {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            verdict: Verdict::Unknown,
            explanation: String::new(),
            evidence: Vec::new(),
        }
    }

    /// Drops any recorded verdict, explanation and evidence.
    pub fn clear_verdict(&mut self) {
        self.verdict = Verdict::Unknown;
        self.explanation.clear();
        self.evidence.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestDatum {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub criteria: Vec<AcceptanceCriterion>,
    #[serde(default)]
    pub test_data: Vec<TestDatum>,
    #[serde(default)]
    pub state: RequirementState,
}

impl Requirement {
    pub fn criterion(&self, id: &str) -> Option<&AcceptanceCriterion> {
        self.criteria.iter().find(|c| c.id == id)
    }

    /// Resets every criterion and the state back to `Unverified`.
    pub fn clear_verdicts(&mut self) {
        self.criteria.iter_mut().for_each(AcceptanceCriterion::clear_verdict);
        self.state = RequirementState::Unverified;
    }
}

/// A named group of requirements checked against one application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSetup {
    pub id: String,
    pub app_ref: String,
    pub requirements: Vec<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReqError {
    #[error("malformed requirement block at line {line}: {reason}")]
    MalformedBlock { line: usize, reason: String },
    #[error("extractor reply does not match the requirement schema: {0}")]
    SchemaViolation(String),
    #[error("completion model unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("cannot derive a state from an empty verdict list")]
    EmptyVerdicts,
    #[error("verdict list contains an unknown verdict")]
    UnknownVerdictPresent,
}

/// Met iff every verdict is met, unmet iff every verdict is unmet, partially
/// met otherwise.
pub fn derive_requirement_state(verdicts: &[Verdict]) -> Result<Outcome, ReqError> {
    if verdicts.is_empty() {
        return Err(ReqError::EmptyVerdicts);
    }
    let mut met = 0usize;
    for v in verdicts {
        match v {
            Verdict::Met => met += 1,
            Verdict::Unmet => {}
            Verdict::Unknown => return Err(ReqError::UnknownVerdictPresent),
        }
    }
    Ok(if met == verdicts.len() {
        Outcome::Met
    } else if met == 0 {
        Outcome::Unmet
    } else {
        Outcome::PartiallyMet
    })
}

#[derive(Default)]
struct Draft {
    title: String,
    description: String,
    criteria: Vec<String>,
    test_data: Vec<TestDatum>,
    line: usize,
}

impl Draft {
    fn finish(self, ordinal: usize) -> Result<Requirement, ReqError> {
        if self.criteria.is_empty() {
            return Err(ReqError::MalformedBlock {
                line: self.line,
                reason: format!("requirement '{}' has no AC lines", self.title),
            });
        }
        Ok(Requirement {
            id: format!("req-{ordinal}"),
            title: self.title,
            description: self.description,
            criteria: self
                .criteria
                .into_iter()
                .enumerate()
                .map(|(i, text)| AcceptanceCriterion::new(format!("ac-{}", i + 1), text))
                .collect(),
            test_data: self.test_data,
            state: RequirementState::Unverified,
        })
    }
}

fn parse_data_line(body: &str, line: usize) -> Result<Vec<TestDatum>, ReqError> {
    body.split(',')
        .map(str::trim)
        .filter(|pair| !pair.is_empty())
        .map(|pair| {
            let (k, v) = pair.split_once('=').ok_or_else(|| ReqError::MalformedBlock {
                line,
                reason: format!("DATA entry '{pair}' is not key=value"),
            })?;
            Ok(TestDatum { key: k.trim().to_string(), value: v.trim().to_string() })
        })
        .collect()
}

/// Parses the `REQ:` block format. Ids are assigned by position
/// (`req-<n>`, `ac-<n>`), so re-parsing the same text yields the same ids.
pub fn parse_requirements_structured(raw: &str) -> Result<Vec<Requirement>, ReqError> {
    let mut out = Vec::new();
    let mut draft: Option<Draft> = None;

    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            if let Some(d) = draft.take() {
                out.push(d.finish(out.len() + 1)?);
            }
            continue;
        }
        let (tag, body) = line.split_once(':').ok_or_else(|| ReqError::MalformedBlock {
            line: lineno,
            reason: format!("expected 'TAG: text', got '{line}'"),
        })?;
        let body = body.trim();
        if tag == "REQ" {
            if let Some(d) = draft.take() {
                out.push(d.finish(out.len() + 1)?);
            }
            draft = Some(Draft { title: body.to_string(), line: lineno, ..Draft::default() });
            continue;
        }
        let d = draft.as_mut().ok_or_else(|| ReqError::MalformedBlock {
            line: lineno,
            reason: format!("{tag} line before the first REQ line"),
        })?;
        match tag {
            "DESC" => {
                if !d.description.is_empty() {
                    d.description.push(' ');
                }
                d.description.push_str(body);
            }
            "AC" => d.criteria.push(body.to_string()),
            "DATA" => d.test_data.extend(parse_data_line(body, lineno)?),
            other => {
                return Err(ReqError::MalformedBlock {
                    line: lineno,
                    reason: format!("unknown tag '{other}'"),
                })
            }
        }
    }
    if let Some(d) = draft.take() {
        out.push(d.finish(out.len() + 1)?);
    }
    Ok(out)
}

/// Writes requirements back into the block format accepted by
/// [`parse_requirements_structured`].
pub fn to_block_text(reqs: &[Requirement]) -> String {
    let mut out = String::new();
    for (i, r) in reqs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("REQ: {}\n", r.title));
        if !r.description.is_empty() {
            out.push_str(&format!("DESC: {}\n", r.description));
        }
        for c in &r.criteria {
            out.push_str(&format!("AC: {}\n", c.text));
        }
        if !r.test_data.is_empty() {
            let pairs: Vec<String> =
                r.test_data.iter().map(|d| format!("{}={}", d.key, d.value)).collect();
            out.push_str(&format!("DATA: {}\n", pairs.join(", ")));
        }
    }
    out
}

const EXTRACTION_PROMPT: &str = "\
You convert informal software requirements into a structured list.
Split the text into individual requirements. For each one produce a short title,
a description, one or more individually checkable acceptance criteria and any
concrete input values mentioned as test data. You may infer missing details from context.
Reply with a JSON array only. Each element must have exactly this shape:
{\"title\": str, \"description\": str, \"criteria\": [{\"text\": str}], \"test_data\": [{\"key\": str, \"value\": str}]}
";

fn extraction_prompt(raw: &str) -> String {
    format!("{EXTRACTION_PROMPT}\nRequirements text:\n{raw}\n")
}

fn expect_str<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, at: usize) -> Result<&'a str, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("requirement {at}: '{key}' must be a string")),
        None => Err(format!("requirement {at}: missing '{key}'")),
    }
}

fn expect_array<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, at: usize) -> Result<&'a Vec<Value>, String> {
    match obj.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(format!("requirement {at}: '{key}' must be an array")),
        None => Err(format!("requirement {at}: missing '{key}'")),
    }
}

/// Validates an extractor reply against the requirement JSON schema and
/// assigns positional ids.
pub fn requirements_from_json(reply: &str) -> Result<Vec<Requirement>, String> {
    let value: Value = serde_json::from_str(reply.trim()).map_err(|e| format!("not JSON: {e}"))?;
    let items = match &value {
        Value::Array(items) => items,
        Value::Object(o) => match o.get("requirements") {
            Some(Value::Array(items)) => items,
            _ => return Err("expected a JSON array of requirements".into()),
        },
        _ => return Err("expected a JSON array of requirements".into()),
    };
    if items.is_empty() {
        return Err("no requirements in reply".into());
    }
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let at = i + 1;
        let obj = item.as_object().ok_or_else(|| format!("requirement {at}: not an object"))?;
        let title = expect_str(obj, "title", at)?;
        let description = expect_str(obj, "description", at)?;
        let criteria = expect_array(obj, "criteria", at)?;
        if criteria.is_empty() {
            return Err(format!("requirement {at}: 'criteria' is empty"));
        }
        let criteria = criteria
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let text = c
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or_else(|| format!("requirement {at}: criterion {} lacks string 'text'", j + 1))?;
                Ok(AcceptanceCriterion::new(format!("ac-{}", j + 1), text))
            })
            .collect::<Result<Vec<_>, String>>()?;
        let test_data = expect_array(obj, "test_data", at)?
            .iter()
            .map(|d| {
                let key = d.get("key").and_then(Value::as_str);
                let value = d.get("value").and_then(Value::as_str);
                match (key, value) {
                    (Some(k), Some(v)) => Ok(TestDatum { key: k.into(), value: v.into() }),
                    _ => Err(format!("requirement {at}: test_data entries need string 'key' and 'value'")),
                }
            })
            .collect::<Result<Vec<_>, String>>()?;
        out.push(Requirement {
            id: format!("req-{at}"),
            title: title.to_string(),
            description: description.to_string(),
            criteria,
            test_data,
            state: RequirementState::Unverified,
        });
    }
    Ok(out)
}

/// Asks a completion model to structure free-form requirement text. A reply
/// that fails validation gets exactly one re-prompt carrying the error.
pub fn extract_requirements_llm(
    raw: &str,
    model: &mut dyn CompletionModel,
) -> Result<Vec<Requirement>, ReqError> {
    let prompt = extraction_prompt(raw);
    let first = model.complete(&prompt).map_err(|e| ReqError::AdapterUnavailable(e.to_string()))?;
    let err = match requirements_from_json(&first) {
        Ok(reqs) => return Ok(reqs),
        Err(e) => e,
    };
    let retry = format!(
        "{prompt}\nYour previous reply was rejected: {err}\nReply again with valid JSON only.\n"
    );
    let second = model.complete(&retry).map_err(|e| ReqError::AdapterUnavailable(e.to_string()))?;
    requirements_from_json(&second).map_err(ReqError::SchemaViolation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agentproto::ReplayCompletion;
    use proptest::prelude::*;

    use Verdict::{Met, Unmet};

    #[test]
    fn parses_single_block() {
        let reqs =
            parse_requirements_structured("REQ: Add expense\nAC: Button visible\nAC: Row appended\nDATA: amount=12.50")
                .unwrap();
        assert_eq!(reqs.len(), 1);
        let r = &reqs[0];
        assert_eq!(r.id, "req-1");
        assert_eq!(r.title, "Add expense");
        assert_eq!(r.criteria.len(), 2);
        assert_eq!(r.criteria[1].id, "ac-2");
        assert_eq!(r.test_data, vec![TestDatum { key: "amount".into(), value: "12.50".into() }]);
        assert_eq!(r.state, RequirementState::Unverified);
        assert!(r.criteria.iter().all(|c| c.verdict == Verdict::Unknown && c.explanation.is_empty()));
    }

    #[test]
    fn orphan_ac_is_malformed() {
        assert!(matches!(
            parse_requirements_structured("AC: orphan line"),
            Err(ReqError::MalformedBlock { line: 1, .. })
        ));
    }

    #[test]
    fn req_without_ac_is_malformed() {
        let err = parse_requirements_structured("REQ: a\nAC: x\n\nREQ: b\nDESC: nothing to check\n").unwrap_err();
        assert!(matches!(err, ReqError::MalformedBlock { line: 4, .. }));
    }

    #[test]
    fn consecutive_req_lines_start_new_blocks() {
        let reqs = parse_requirements_structured("REQ: a\nAC: 1\nREQ: b\nAC: 2\nAC: 3\n").unwrap();
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[1].id, "req-2");
        assert_eq!(reqs[1].criteria.len(), 2);
    }

    #[test]
    fn derive_rule_examples() {
        assert_eq!(derive_requirement_state(&[Met, Met, Met]), Ok(Outcome::Met));
        assert_eq!(derive_requirement_state(&[Unmet, Unmet, Unmet]), Ok(Outcome::Unmet));
        assert_eq!(derive_requirement_state(&[Met, Unmet, Met]), Ok(Outcome::PartiallyMet));
        assert_eq!(derive_requirement_state(&[]), Err(ReqError::EmptyVerdicts));
        assert_eq!(derive_requirement_state(&[Met, Verdict::Unknown]), Err(ReqError::UnknownVerdictPresent));
    }

    #[test]
    fn derive_rule_is_monotone_under_single_flips() {
        for n in 1..=6usize {
            for mask in 0u32..(1 << n) {
                let v: Vec<Verdict> = (0..n).map(|i| if mask >> i & 1 == 1 { Met } else { Unmet }).collect();
                let base = derive_requirement_state(&v).unwrap();
                for i in (0..n).filter(|i| v[*i] == Unmet) {
                    let mut flipped = v.clone();
                    flipped[i] = Met;
                    assert!(derive_requirement_state(&flipped).unwrap() >= base);
                }
            }
        }
    }

    #[test]
    fn extraction_replays_canned_reply() {
        let canned = r#"[{"title":"Add expense","description":"Users add expenses","criteria":[{"text":"Row appended"}],"test_data":[{"key":"amount","value":"12.50"}]}]"#;
        let mut model = ReplayCompletion::new(vec![canned.to_string()]);
        let reqs = extract_requirements_llm("free-form text about expenses", &mut model).unwrap();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].criteria[0].text, "Row appended");
        assert_eq!(reqs[0].test_data[0].value, "12.50");
    }

    #[test]
    fn extraction_retries_once_then_fails() {
        let mut model = ReplayCompletion::new(vec!["nope".into(), "still nope".into()]);
        assert!(matches!(extract_requirements_llm("x", &mut model), Err(ReqError::SchemaViolation(_))));

        let good = r#"[{"title":"t","description":"d","criteria":[{"text":"c"}],"test_data":[]}]"#;
        let mut model = ReplayCompletion::new(vec!["nope".into(), good.into()]);
        assert_eq!(extract_requirements_llm("x", &mut model).unwrap().len(), 1);
    }

    #[test]
    fn extraction_rejects_missing_criteria() {
        let bad = r#"[{"title":"t","description":"d","test_data":[]}]"#;
        let mut model = ReplayCompletion::new(vec![bad.into(), bad.into()]);
        match extract_requirements_llm("x", &mut model) {
            Err(ReqError::SchemaViolation(msg)) => assert!(msg.contains("criteria")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extraction_without_replies_is_unavailable() {
        let mut model = ReplayCompletion::new(vec![]);
        assert!(matches!(extract_requirements_llm("x", &mut model), Err(ReqError::AdapterUnavailable(_))));
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        "[A-Za-z0-9][A-Za-z0-9 .!?'-]{0,30}[A-Za-z0-9.]".prop_map(|s| s.to_string())
    }

    fn requirement_strategy() -> impl Strategy<Value = (String, String, Vec<String>, Vec<(String, String)>)> {
        (
            text_strategy(),
            prop_oneof![Just(String::new()), text_strategy()],
            prop::collection::vec(text_strategy(), 1..5),
            prop::collection::vec(("[a-z_]{1,8}", "[A-Za-z0-9.]{1,8}"), 0..4),
        )
    }

    proptest! {
        #[test]
        fn block_format_round_trips(raw in prop::collection::vec(requirement_strategy(), 1..6)) {
            let reqs: Vec<Requirement> = raw
                .into_iter()
                .enumerate()
                .map(|(i, (title, description, acs, data))| Requirement {
                    id: format!("req-{}", i + 1),
                    title,
                    description,
                    criteria: acs
                        .into_iter()
                        .enumerate()
                        .map(|(j, t)| AcceptanceCriterion::new(format!("ac-{}", j + 1), t))
                        .collect(),
                    test_data: data.into_iter().map(|(key, value)| TestDatum { key, value }).collect(),
                    state: RequirementState::Unverified,
                })
                .collect();
            let text = to_block_text(&reqs);
            prop_assert_eq!(parse_requirements_structured(&text).unwrap(), reqs);
        }
    }
}
