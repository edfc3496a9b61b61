//! Evaluation: P/R/F1 for requirement and criterion labels, inter-rater
//! agreement, run-log aggregates and the tabular report.

mod agreement;
mod aggregate;
mod labels;
mod metrics;
mod report;

pub use agreement::{bootstrap_ci, cohens_kappa, krippendorff_alpha_ordinal, observed_agreement, AgreementStats, BootstrapCi};
pub use aggregate::{aggregate_runs, load_run_metrics, Aggregates, MeanSd, RunMetrics, SdKind};
pub use labels::{parse_labels, read_labels, write_labels, LabelFile, LabelRow};
pub use metrics::{confusion, prf1, score_labels, Counts, Prf1, Scores, AC_CLASSES, REQ_CLASSES};
pub use report::{parse_report_csv, render_csv, render_text, ReportRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: bad label '{label}'")]
    BadLabel { row: usize, label: String },
    #[error("duplicate label for {0}")]
    DuplicateId(String),
    #[error("gold and predicted ids differ (only in gold: {only_gold:?}; only in predicted: {only_pred:?})")]
    IdMismatch { only_gold: Vec<String>, only_pred: Vec<String> },
    #[error("no variance in the pairable values; alpha is undefined")]
    NoVariance,
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateMarginals,
    #[error("not enough data: {0}")]
    Insufficient(String),
    #[error("run log {path}: {reason}")]
    RunLog { path: String, reason: String },
}
