//! Agent-side protocol of the verification loop: the action grammar, prompt
//! assembly, the model adapter contracts and final summary validation.

mod action;
mod adapter;
mod prompt;
mod summary;

pub use action::{format_action, parse_action, split_reply, Action, ActionParseError};
pub use adapter::{
    load_script, AdapterError, CompletionModel, HistoryEntry, ModelAdapter, ModelReply, NoisyVerdicts, RawReply,
    ReplayAdapter, ReplayCompletion, ScriptEntry, ScriptLoadError, Turn, UsageStats,
};
pub use prompt::{build_verification_prompt, SUMMARY_SCHEMA};
pub use summary::{check_evidence, parse_summary, CriterionVerdict, SummaryError, VerdictSummary};
