use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::reqmodel::{derive_requirement_state, Outcome, Requirement, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub id: String,
    pub verdict: Verdict,
    pub explanation: String,
    pub evidence: Vec<usize>,
}

/// The agent's final report for one requirement. `overall` is always the
/// value derived from the criterion verdicts, never the agent's own claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub requirement_id: String,
    pub overall: Outcome,
    pub criteria: Vec<CriterionVerdict>,
    pub narrative: String,
}

impl VerdictSummary {
    pub fn unmet(&self) -> impl Iterator<Item = &CriterionVerdict> {
        self.criteria.iter().filter(|c| c.verdict == Verdict::Unmet)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SummaryError {
    #[error("summary is not valid JSON: {0}")]
    JsonSyntax(String),
    #[error("summary does not cover criterion {0}")]
    MissingCriterion(String),
    #[error("summary mentions unknown or duplicate criterion {0}")]
    ExtraCriterion(String),
    #[error("unrecognized verdict token '{0}'")]
    BadVerdictToken(String),
    #[error("summary is for requirement {found}, expected {expected}")]
    RequirementMismatch { expected: String, found: String },
    #[error("summary field {0}")]
    Schema(String),
    #[error("evidence step {step} of criterion {criterion} is outside the trajectory ({steps} steps)")]
    EvidenceOutOfRange { criterion: String, step: usize, steps: usize },
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a Value, SummaryError> {
    obj.get(key).ok_or_else(|| SummaryError::Schema(format!("'{key}' is missing")))
}

fn str_field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a str, SummaryError> {
    field(obj, key)?.as_str().ok_or_else(|| SummaryError::Schema(format!("'{key}' must be a string")))
}

/// Validates a Finish payload against `req`. Every criterion of the
/// requirement must appear exactly once.
pub fn parse_summary(raw: &str, req: &Requirement) -> Result<VerdictSummary, SummaryError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| SummaryError::JsonSyntax(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| SummaryError::Schema("root must be an object".into()))?;

    let requirement_id = str_field(obj, "requirement_id")?;
    if requirement_id != req.id {
        return Err(SummaryError::RequirementMismatch { expected: req.id.clone(), found: requirement_id.into() });
    }
    let claimed = str_field(obj, "overall")?;
    if Outcome::parse(claimed).is_none() {
        return Err(SummaryError::BadVerdictToken(claimed.into()));
    }
    let narrative = match obj.get("narrative") {
        None => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(SummaryError::Schema("'narrative' must be a string".into())),
    };
    let items = field(obj, "criteria")?
        .as_array()
        .ok_or_else(|| SummaryError::Schema("'criteria' must be an array".into()))?;

    let known: BTreeSet<&str> = req.criteria.iter().map(|c| c.id.as_str()).collect();
    let mut seen = BTreeSet::new();
    let mut parsed = Vec::with_capacity(items.len());
    for item in items {
        let c = item.as_object().ok_or_else(|| SummaryError::Schema("criteria entries must be objects".into()))?;
        let id = str_field(c, "id")?;
        if !known.contains(id) || !seen.insert(id.to_string()) {
            return Err(SummaryError::ExtraCriterion(id.into()));
        }
        let verdict = match str_field(c, "verdict")? {
            "met" => Verdict::Met,
            "unmet" => Verdict::Unmet,
            other => return Err(SummaryError::BadVerdictToken(other.into())),
        };
        let explanation = str_field(c, "explanation")?.to_string();
        let evidence = match c.get("evidence") {
            None => Vec::new(),
            Some(Value::Array(steps)) => steps
                .iter()
                .map(|s| {
                    s.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| SummaryError::Schema(format!("evidence of {id} must be non-negative integers")))
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(SummaryError::Schema(format!("evidence of {id} must be an array"))),
        };
        parsed.push(CriterionVerdict { id: id.into(), verdict, explanation, evidence });
    }
    // Report in the requirement's criterion order.
    let mut criteria = Vec::with_capacity(parsed.len());
    for c in &req.criteria {
        let pos = parsed
            .iter()
            .position(|p| p.id == c.id)
            .ok_or_else(|| SummaryError::MissingCriterion(c.id.clone()))?;
        criteria.push(parsed.swap_remove(pos));
    }
    let verdicts: Vec<Verdict> = criteria.iter().map(|c| c.verdict).collect();
    let overall = derive_requirement_state(&verdicts).map_err(|e| SummaryError::Schema(e.to_string()))?;
    Ok(VerdictSummary { requirement_id: req.id.clone(), overall, criteria, narrative })
}

/// Checks that every evidence index refers to a recorded step.
pub fn check_evidence(summary: &VerdictSummary, steps: usize) -> Result<(), SummaryError> {
    for c in &summary.criteria {
        if let Some(&step) = c.evidence.iter().find(|&&s| s >= steps) {
            return Err(SummaryError::EvidenceOutOfRange { criterion: c.id.clone(), step, steps });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reqmodel::parse_requirements_structured;
    use serde_json::json;

    fn req() -> Requirement {
        parse_requirements_structured("REQ: r\nAC: a\nAC: b\nAC: c").unwrap().remove(0)
    }

    fn payload(overall: &str, verdicts: &[(&str, &str)]) -> String {
        json!({
            "requirement_id": "req-1",
            "overall": overall,
            "criteria": verdicts.iter().map(|(id, v)| json!({"id": id, "verdict": v, "explanation": "seen", "evidence": [0]})).collect::<Vec<_>>(),
            "narrative": "done",
        })
        .to_string()
    }

    #[test]
    fn all_met_is_met() {
        let s = parse_summary(&payload("met", &[("ac-1", "met"), ("ac-2", "met"), ("ac-3", "met")]), &req()).unwrap();
        assert_eq!(s.overall, Outcome::Met);
        assert_eq!(s.narrative, "done");
    }

    #[test]
    fn overall_claim_is_recomputed() {
        let s = parse_summary(&payload("met", &[("ac-1", "met"), ("ac-2", "unmet"), ("ac-3", "met")]), &req()).unwrap();
        assert_eq!(s.overall, Outcome::PartiallyMet);
        assert_eq!(s.unmet().map(|c| c.id.as_str()).collect::<Vec<_>>(), vec!["ac-2"]);
    }

    #[test]
    fn criteria_reordered_to_requirement_order() {
        let s = parse_summary(&payload("unmet", &[("ac-3", "unmet"), ("ac-1", "unmet"), ("ac-2", "unmet")]), &req()).unwrap();
        assert_eq!(s.criteria.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), vec!["ac-1", "ac-2", "ac-3"]);
    }

    #[test]
    fn error_paths() {
        let r = req();
        assert_eq!(
            parse_summary(&payload("met", &[("ac-1", "met"), ("ac-3", "met")]), &r),
            Err(SummaryError::MissingCriterion("ac-2".into()))
        );
        assert_eq!(
            parse_summary(&payload("met", &[("ac-1", "met"), ("ac-2", "met"), ("ac-3", "met"), ("ac-9", "met")]), &r),
            Err(SummaryError::ExtraCriterion("ac-9".into()))
        );
        assert_eq!(
            parse_summary(&payload("met", &[("ac-1", "met"), ("ac-1", "met"), ("ac-2", "met"), ("ac-3", "met")]), &r),
            Err(SummaryError::ExtraCriterion("ac-1".into()))
        );
        assert_eq!(
            parse_summary(&payload("met", &[("ac-1", "yes"), ("ac-2", "met"), ("ac-3", "met")]), &r),
            Err(SummaryError::BadVerdictToken("yes".into()))
        );
        assert_eq!(
            parse_summary(&payload("great", &[("ac-1", "met"), ("ac-2", "met"), ("ac-3", "met")]), &r),
            Err(SummaryError::BadVerdictToken("great".into()))
        );
        assert!(matches!(parse_summary("{not json", &r), Err(SummaryError::JsonSyntax(_))));
        let wrong_req = payload("met", &[]).replace("req-1", "req-7");
        assert!(matches!(parse_summary(&wrong_req, &r), Err(SummaryError::RequirementMismatch { .. })));
    }

    #[test]
    fn evidence_bounds() {
        let s = parse_summary(&payload("met", &[("ac-1", "met"), ("ac-2", "met"), ("ac-3", "met")]), &req()).unwrap();
        assert!(check_evidence(&s, 1).is_ok());
        assert!(matches!(check_evidence(&s, 0), Err(SummaryError::EvidenceOutOfRange { .. })));
    }
}
