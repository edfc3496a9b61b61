mod common;

use std::path::Path;
use std::process::{Command, Output};

fn reqcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reqcheck")).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn parse_prints_json() {
    let reqs = common::app_dir("budget").join("requirements.txt");
    let out = ok(reqcheck(&["parse", p(&reqs)]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 5);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "AC: orphan\n").unwrap();
    let out = reqcheck(&["parse", p(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn prompt_names_the_app_and_criteria() {
    let reqs = common::app_dir("parking").join("requirements.txt");
    let out = ok(reqcheck(&["prompt", p(&reqs), "req-2", "--app", "parking"]));
    assert!(out.contains("parking"));
    assert!(out.contains("ac-1"));
}

#[test]
fn run_then_eval_reproduces_gold() {
    let dir = tempfile::tempdir().unwrap();
    let mut eval_args: Vec<String> = vec!["eval".into()];
    for app in common::APPS {
        let d = common::app_dir(app);
        let store = dir.path().join(format!("{app}-store"));
        let pred = dir.path().join(format!("{app}-pred.csv"));
        let out = ok(reqcheck(&[
            "run",
            "--app",
            p(&d.join("app.json")),
            "--requirements",
            p(&d.join("requirements.txt")),
            "--store",
            p(&store),
            "--pred",
            p(&pred),
            "--scripts",
            p(&common::fixtures().join("scripts")),
            "--parallelism",
            "3",
            "--rates-in",
            "3",
            "--rates-out",
            "12",
        ]));
        assert_eq!(out.lines().filter(|l| l.starts_with("run-")).count(), 5, "{out}");
        for arg in ["--gold", p(&d.join("gold.csv")), "--pred", p(&pred), "--runs", p(&store), "--name", app] {
            eval_args.push(arg.to_string());
        }
    }
    let csv = dir.path().join("report.csv");
    eval_args.extend(["--out".into(), p(&csv).into(), "--bootstrap".into(), "500".into(), "--seed".into(), "3".into()]);
    let args: Vec<&str> = eval_args.iter().map(String::as_str).collect();
    let text = ok(reqcheck(&args));
    assert!(text.contains("budget") && text.contains("parking"));

    let rows = reqcheck::evalharness::parse_report_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert!(row.scores.as_array().iter().all(|s| s.f1 == 1.0), "{}", row.name);
    }
    assert_eq!(rows[2].name, "Avg");
    assert!(rows[0].aggregates.unwrap().steps.mean > 1.0);
}

#[test]
fn bad_config_is_rejected() {
    let d = common::app_dir("budget");
    let out = reqcheck(&[
        "run",
        "--app",
        p(&d.join("app.json")),
        "--requirements",
        p(&d.join("requirements.txt")),
        "--plans",
        p(&d.join("plans.json")),
        "--parallelism",
        "0",
    ]);
    assert!(!out.status.success());
}
