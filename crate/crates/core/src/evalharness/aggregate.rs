use std::path::{Path, PathBuf};

use rust_decimal::prelude::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::orchestrator::{read_run_log, VerificationRun};

/// Per-requirement effort of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: f64,
    pub time_secs: f64,
    pub input_tokens: f64,
    pub output_tokens: f64,
    pub cost: f64,
}

impl RunMetrics {
    pub fn of(run: &VerificationRun) -> Self {
        Self {
            steps: run.trajectory.len() as f64,
            time_secs: run.duration_secs(),
            input_tokens: run.total_usage.input_tokens as f64,
            output_tokens: run.total_usage.output_tokens as f64,
            cost: run.cost.to_f64().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdKind {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n − 1.
    Sample,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64], kind: SdKind) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let div = match kind {
            SdKind::Population => n,
            SdKind::Sample if xs.len() > 1 => n - 1.0,
            SdKind::Sample => return Self { mean, sd: 0.0 },
        };
        Self { mean, sd: (ss / div).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub runs: usize,
    pub steps: MeanSd,
    pub time_secs: MeanSd,
    pub input_tokens: MeanSd,
    pub output_tokens: MeanSd,
    pub cost: MeanSd,
}

pub fn aggregate_runs(runs: &[RunMetrics], kind: SdKind) -> Result<Aggregates, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::Insufficient("no runs to aggregate".into()));
    }
    let col = |f: fn(&RunMetrics) -> f64| MeanSd::of(&runs.iter().map(f).collect::<Vec<_>>(), kind);
    Ok(Aggregates {
        runs: runs.len(),
        steps: col(|r| r.steps),
        time_secs: col(|r| r.time_secs),
        input_tokens: col(|r| r.input_tokens),
        output_tokens: col(|r| r.output_tokens),
        cost: col(|r| r.cost),
    })
}

fn jsonl_files(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let hidden = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
        if !hidden && path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
            out.push(path);
        }
    }
    Ok(out)
}

/// Metrics of every terminated run log in `dir` (and `dir/runs`, so a store
/// root works too), ordered by file name.
pub fn load_run_metrics(dir: &Path) -> Result<Vec<RunMetrics>, EvalError> {
    let mut files = jsonl_files(dir)?;
    if dir.join("runs").is_dir() {
        files.extend(jsonl_files(&dir.join("runs"))?);
    }
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let run = read_run_log(&path).map_err(|e| EvalError::RunLog { path: path.display().to_string(), reason: e.to_string() })?;
        if run.status.is_terminal() {
            out.push(RunMetrics::of(&run));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(n: f64) -> RunMetrics {
        RunMetrics { steps: n, time_secs: 0.0, input_tokens: 0.0, output_tokens: 0.0, cost: 0.0 }
    }

    #[test]
    fn single_run_has_zero_sd() {
        let a = aggregate_runs(&[steps(7.0)], SdKind::Population).unwrap();
        assert_eq!(a.steps, MeanSd { mean: 7.0, sd: 0.0 });
    }

    #[test]
    fn two_runs() {
        let a = aggregate_runs(&[steps(10.0), steps(30.0)], SdKind::Population).unwrap();
        assert_eq!(a.steps, MeanSd { mean: 20.0, sd: 10.0 });
        let s = aggregate_runs(&[steps(10.0), steps(30.0)], SdKind::Sample).unwrap();
        assert!((s.steps.sd - 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(aggregate_runs(&[], SdKind::Population).is_err());
    }
}
