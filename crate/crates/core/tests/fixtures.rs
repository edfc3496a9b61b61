mod common;

use reqcheck::agentproto::load_script;
use reqcheck::guienv::compile_plan;
use reqcheck::reqmodel::{parse_requirements_structured, ReqError, RequirementState};

#[test]
fn committed_scripts_match_compiled_plans() {
    for app_name in common::APPS {
        let app = common::app(app_name);
        let plans = common::plans(app_name);
        for req in common::requirements(app_name) {
            let compiled = compile_plan(&app, &req, &plans.plans[&req.id]).unwrap();
            let path = common::fixtures().join("scripts").join(&app.app_id).join(format!("{}.json", req.id));
            let committed = load_script(&path).unwrap();
            assert_eq!(committed, compiled, "{} is stale; regenerate with compile-plan", path.display());
        }
    }
}

#[test]
fn catalogue_counts_match_line_counting() {
    let raw = std::fs::read_to_string(common::fixtures().join("catalogue_30.txt")).unwrap();
    let req_lines = raw.lines().filter(|l| l.trim_start().starts_with("REQ:")).count();
    let ac_lines = raw.lines().filter(|l| l.trim_start().starts_with("AC:")).count();
    let reqs = parse_requirements_structured(&raw).unwrap();
    assert_eq!((req_lines, ac_lines), (30, 90));
    assert_eq!(reqs.len(), req_lines);
    assert_eq!(reqs.iter().map(|r| r.criteria.len()).sum::<usize>(), ac_lines);
    assert!(reqs.iter().all(|r| r.state == RequirementState::Unverified && !r.test_data.is_empty()));
}

#[test]
fn worked_examples() {
    let reqs = parse_requirements_structured("REQ: Add expense\nAC: Button visible\nAC: Row appended\nDATA: amount=12.50").unwrap();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].criteria.len(), 2);
    assert_eq!((reqs[0].test_data[0].key.as_str(), reqs[0].test_data[0].value.as_str()), ("amount", "12.50"));
    assert!(matches!(parse_requirements_structured("AC: orphan line"), Err(ReqError::MalformedBlock { line: 1, .. })));
}

#[test]
fn gold_labels_cover_every_criterion() {
    for app in common::APPS {
        let gold = reqcheck::evalharness::read_labels(&common::app_dir(app).join("gold.csv")).unwrap();
        let reqs = common::requirements(app);
        assert_eq!(gold.requirements.len(), reqs.len());
        for r in &reqs {
            for c in &r.criteria {
                assert!(gold.criteria.contains_key(&format!("{}/{}", r.id, c.id)), "{app} {} {}", r.id, c.id);
            }
        }
    }
}
