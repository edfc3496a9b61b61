use std::fmt::Write as _;

use crate::reqmodel::Requirement;

pub const AUTONOMY_INSTRUCTION: &str = "Work fully autonomously. Never ask for confirmation, clarification or help; decide every step yourself until you can give a verdict.";

pub const MINIMAL_ACTIONS_INSTRUCTION: &str = "Use as few actions as possible. Only interact with the application where it produces evidence for an acceptance criterion, and use the provided test data whenever input is required.";

pub const EVALUATION_INSTRUCTION: &str = "Evaluate each acceptance criterion individually. Justify every verdict with concrete evidence and cite the indices of the steps where you observed it.";

pub const ACTION_GRAMMAR: &str = "\
click(x, y)
double_click(x, y)
scroll(x, y, dx, dy)
type(\"text\")
keypress(\"key\")
wait(ms)
finish({...summary json...})";

pub const SUMMARY_SCHEMA: &str = r#"{"requirement_id": str, "overall": "met"|"partially_met"|"unmet", "criteria": [{"id": str, "verdict": "met"|"unmet", "explanation": str, "evidence": [int]}], "narrative": str}"#;

/// Builds the instruction prompt for one verification run. The output depends
/// only on the requirement and the application locator.
pub fn build_verification_prompt(req: &Requirement, app_ref: &str) -> String {
    let mut p = String::new();
    p.push_str("You are verifying whether a requirement is implemented in a GUI application.\n");
    p.push_str(AUTONOMY_INSTRUCTION);
    p.push('\n');
    p.push_str(MINIMAL_ACTIONS_INSTRUCTION);
    p.push('\n');
    p.push_str(EVALUATION_INSTRUCTION);
    p.push_str("\n\n");

    let _ = writeln!(p, "Requirement {}: {}", req.id, req.title);
    if !req.description.is_empty() {
        let _ = writeln!(p, "{}", req.description);
    }
    p.push_str("\nAcceptance criteria:\n");
    for c in &req.criteria {
        let _ = writeln!(p, "- {}: {}", c.id, c.text);
    }
    if !req.test_data.is_empty() {
        p.push_str("\nTest data:\n");
        for d in &req.test_data {
            let _ = writeln!(p, "- {} = {}", d.key, d.value);
        }
    }
    let _ = writeln!(p, "\nApplication: {app_ref}");
    p.push_str("\nReply with your reasoning, then exactly one action on the last line. Available actions:\n");
    p.push_str(ACTION_GRAMMAR);
    p.push_str("\n\nWhen every criterion is decided, finish with a summary matching this JSON schema:\n");
    p.push_str(SUMMARY_SCHEMA);
    p.push('\n');
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reqmodel::parse_requirements_structured;

    fn req(text: &str) -> Requirement {
        parse_requirements_structured(text).unwrap().remove(0)
    }

    #[test]
    fn lists_each_criterion_once() {
        let r = req("REQ: Add\nDESC: Adding works\nAC: one\nAC: two\nAC: three\nDATA: amount=12.50");
        let p = build_verification_prompt(&r, "fixtures/budget.app.json");
        for id in ["ac-1", "ac-2", "ac-3"] {
            assert_eq!(p.matches(&format!("- {id}:")).count(), 1);
        }
        assert!(p.contains("- amount = 12.50"));
        assert!(p.contains("Application: fixtures/budget.app.json"));
    }

    #[test]
    fn sections_appear_in_fixed_order() {
        let r = req("REQ: Add\nDESC: Adding works\nAC: one\nDATA: k=v");
        let p = build_verification_prompt(&r, "app://x");
        let order = [
            p.find(AUTONOMY_INSTRUCTION).unwrap(),
            p.find(MINIMAL_ACTIONS_INSTRUCTION).unwrap(),
            p.find("Adding works").unwrap(),
            p.find("- ac-1: one").unwrap(),
            p.find("- k = v").unwrap(),
            p.find("Application: app://x").unwrap(),
            p.find(SUMMARY_SCHEMA).unwrap(),
        ];
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_test_data_omits_section() {
        let p = build_verification_prompt(&req("REQ: a\nAC: b"), "x");
        assert!(!p.contains("Test data"));
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let r = req("REQ: a\nAC: b\nDATA: x=1");
        assert_eq!(build_verification_prompt(&r, "x"), build_verification_prompt(&r.clone(), "x"));
    }
}
