use std::collections::VecDeque;
use std::ops::{Add, AddAssign};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{parse_action, Action, ActionParseError};
use crate::guienv::Observation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageStats {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl UsageStats {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self { input_tokens, output_tokens }
    }
}

impl Add for UsageStats {
    type Output = UsageStats;
    fn add(self, rhs: Self) -> Self {
        UsageStats {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for UsageStats {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for UsageStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(UsageStats::default(), Add::add)
    }
}

/// A (reasoning, action) pair already sent by the agent in this run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub reasoning: String,
    pub action: String,
}

/// Everything the model sees on one turn.
#[derive(Debug, Clone, Copy)]
pub struct Turn<'a> {
    pub prompt: &'a str,
    pub observation: &'a Observation,
    pub history: &'a [HistoryEntry],
    /// Set on a re-prompt: why the previous reply was rejected.
    pub correction: Option<&'a str>,
}

/// A reply before its action line has been parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReply {
    pub reasoning: String,
    pub action: String,
    pub usage: UsageStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelReply {
    pub reasoning: String,
    pub action: Action,
    pub usage: UsageStats,
}

impl RawReply {
    pub fn parse(&self) -> Result<ModelReply, ActionParseError> {
        Ok(ModelReply {
            reasoning: self.reasoning.clone(),
            action: parse_action(&self.action)?,
            usage: self.usage,
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AdapterError {
    #[error("script ended at turn {turn} before a finish action")]
    ScriptExhausted { turn: usize },
    #[error("state hash mismatch at turn {turn}: script expects {expected}, observed {actual}")]
    HashAssertionFailed { turn: usize, expected: String, actual: String },
    #[error("model unavailable: {0}")]
    Unavailable(String),
}

/// The contract through which the verification loop obtains agent replies.
pub trait ModelAdapter: Send {
    fn next_reply(&mut self, turn: &Turn<'_>) -> Result<RawReply, AdapterError>;
}

/// Plain text completion, used for requirement extraction.
pub trait CompletionModel {
    fn complete(&mut self, prompt: &str) -> Result<String, AdapterError>;
}

/// One entry of a replay script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default)]
    pub reasoning: String,
    pub action: String,
    #[serde(default)]
    pub usage: UsageStats,
    /// Hex state hash the observation must carry before this reply is served.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_hash: Option<String>,
}

#[derive(Debug, Error)]
pub enum ScriptLoadError {
    #[error("cannot read script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid script {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, ScriptLoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScriptLoadError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| ScriptLoadError::Json { path: path.display().to_string(), source })
}

/// Replays a fixed reply sequence, one entry per turn.
#[derive(Debug, Clone)]
pub struct ReplayAdapter {
    entries: Vec<ScriptEntry>,
    cursor: usize,
}

impl ReplayAdapter {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries, cursor: 0 }
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptLoadError> {
        load_script(path).map(Self::new)
    }

    pub fn served(&self) -> usize {
        self.cursor
    }
}

impl ModelAdapter for ReplayAdapter {
    fn next_reply(&mut self, turn: &Turn<'_>) -> Result<RawReply, AdapterError> {
        let at = self.cursor;
        let entry = self.entries.get(at).ok_or(AdapterError::ScriptExhausted { turn: at })?;
        if let Some(expected) = &entry.expect_hash {
            let actual = turn.observation.hash_hex();
            if *expected != actual {
                return Err(AdapterError::HashAssertionFailed { turn: at, expected: expected.clone(), actual });
            }
        }
        self.cursor += 1;
        Ok(RawReply { reasoning: entry.reasoning.clone(), action: entry.action.clone(), usage: entry.usage })
    }
}

/// Wraps an adapter and flips each criterion verdict of its final summary
/// with probability `p`.
pub struct NoisyVerdicts<A> {
    inner: A,
    p: f64,
    rng: ChaCha8Rng,
}

impl<A: ModelAdapter> NoisyVerdicts<A> {
    pub fn new(inner: A, p: f64, seed: u64) -> Self {
        Self { inner, p, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn perturb(&mut self, payload: &str) -> Option<String> {
        let mut value: serde_json::Value = serde_json::from_str(payload).ok()?;
        for c in value.get_mut("criteria")?.as_array_mut()? {
            if self.rng.random::<f64>() < self.p {
                let flipped = match c.get("verdict").and_then(|v| v.as_str()) {
                    Some("met") => "unmet",
                    Some("unmet") => "met",
                    _ => continue,
                };
                c["verdict"] = flipped.into();
            }
        }
        Some(value.to_string())
    }
}

impl<A: ModelAdapter> ModelAdapter for NoisyVerdicts<A> {
    fn next_reply(&mut self, turn: &Turn<'_>) -> Result<RawReply, AdapterError> {
        let mut reply = self.inner.next_reply(turn)?;
        if let Ok(Action::Finish { summary_json }) = parse_action(&reply.action) {
            if let Some(noisy) = self.perturb(&summary_json) {
                reply.action = Action::Finish { summary_json: noisy }.to_string();
            }
        }
        Ok(reply)
    }
}

impl<T: ModelAdapter + ?Sized> ModelAdapter for Box<T> {
    fn next_reply(&mut self, turn: &Turn<'_>) -> Result<RawReply, AdapterError> {
        (**self).next_reply(turn)
    }
}

/// Returns canned completions in order.
#[derive(Debug, Clone, Default)]
pub struct ReplayCompletion {
    replies: VecDeque<String>,
}

impl ReplayCompletion {
    pub fn new(replies: Vec<String>) -> Self {
        Self { replies: replies.into() }
    }
}

impl CompletionModel for ReplayCompletion {
    fn complete(&mut self, _prompt: &str) -> Result<String, AdapterError> {
        self.replies.pop_front().ok_or_else(|| AdapterError::Unavailable("no canned completion left".into()))
    }
}
