use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::{TrajectoryStep, VerificationRun};

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("run log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("run log line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("run log has no run record")]
    MissingRunRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Step(TrajectoryStep),
    Run(Box<VerificationRun>),
}

/// One JSON object per line: every trajectory step, then the run record.
pub fn encode_run_log(run: &VerificationRun) -> String {
    let mut out = String::new();
    for step in &run.trajectory {
        out.push_str(&serde_json::to_string(&LogLine::Step(step.clone())).expect("step serializes"));
        out.push('\n');
    }
    let mut header = run.clone();
    header.trajectory.clear();
    out.push_str(&serde_json::to_string(&LogLine::Run(Box::new(header))).expect("run serializes"));
    out.push('\n');
    out
}

pub fn decode_run_log(reader: impl BufRead) -> Result<VerificationRun, RunLogError> {
    let mut steps = Vec::new();
    let mut run = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|source| RunLogError::Json { line: i + 1, source })? {
            LogLine::Step(s) => steps.push(s),
            LogLine::Run(r) => run = Some(*r),
        }
    }
    let mut run = run.ok_or(RunLogError::MissingRunRecord)?;
    run.trajectory = steps;
    Ok(run)
}

/// Writes the log through a temporary file in the same directory and renames
/// it into place, so readers never see a half-written log.
pub fn write_run_log(path: &Path, run: &VerificationRun) -> Result<(), RunLogError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(encode_run_log(run).as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| RunLogError::Io(e.error))?;
    Ok(())
}

pub fn read_run_log(path: &Path) -> Result<VerificationRun, RunLogError> {
    decode_run_log(BufReader::new(std::fs::File::open(path)?))
}
