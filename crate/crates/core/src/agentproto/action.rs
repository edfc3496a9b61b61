use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One GUI command issued by the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Click { x: i32, y: i32 },
    DoubleClick { x: i32, y: i32 },
    Scroll { x: i32, y: i32, dx: i32, dy: i32 },
    Type { text: String },
    KeyPress { key: String },
    Wait { millis: u64 },
    Finish { summary_json: String },
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::Click { .. } => "click",
            Action::DoubleClick { .. } => "double_click",
            Action::Scroll { .. } => "scroll",
            Action::Type { .. } => "type",
            Action::KeyPress { .. } => "keypress",
            Action::Wait { .. } => "wait",
            Action::Finish { .. } => "finish",
        }
    }

    pub fn is_finish(&self) -> bool {
        matches!(self, Action::Finish { .. })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ActionParseError {
    #[error("unknown action verb '{0}'")]
    UnknownVerb(String),
    #[error("{verb} takes {expected} argument(s), got {got}")]
    BadArity { verb: String, expected: usize, got: usize },
    #[error("argument '{0}' is not a valid integer")]
    NonNumericCoordinate(String),
    #[error("malformed action: {0}")]
    Syntax(String),
}

/// Quotes `text` as a JSON string literal using only printable ASCII.
fn quote_ascii(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for ch in text.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            ' '..='~' => out.push(ch),
            _ => {
                let mut buf = [0u16; 2];
                for unit in ch.encode_utf16(&mut buf) {
                    let _ = write!(out, "\\u{unit:04x}");
                }
            }
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click { x, y } => write!(f, "click({x}, {y})"),
            Action::DoubleClick { x, y } => write!(f, "double_click({x}, {y})"),
            Action::Scroll { x, y, dx, dy } => write!(f, "scroll({x}, {y}, {dx}, {dy})"),
            Action::Type { text } => write!(f, "type({})", quote_ascii(text)),
            Action::KeyPress { key } => write!(f, "keypress({})", quote_ascii(key)),
            Action::Wait { millis } => write!(f, "wait({millis})"),
            Action::Finish { summary_json } => write!(f, "finish({summary_json})"),
        }
    }
}

/// Canonical single-line form of an action.
pub fn format_action(action: &Action) -> String {
    action.to_string()
}

fn int_args(verb: &str, inner: &str, expected: usize) -> Result<Vec<i64>, ActionParseError> {
    let parts: Vec<&str> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    if parts.len() != expected {
        return Err(ActionParseError::BadArity { verb: verb.into(), expected, got: parts.len() });
    }
    parts
        .iter()
        .map(|p| p.parse::<i64>().map_err(|_| ActionParseError::NonNumericCoordinate((*p).to_string())))
        .collect()
}

fn coord(v: i64) -> Result<i32, ActionParseError> {
    i32::try_from(v).map_err(|_| ActionParseError::NonNumericCoordinate(v.to_string()))
}

fn string_arg(verb: &str, inner: &str) -> Result<String, ActionParseError> {
    let inner = inner.trim();
    if inner.is_empty() {
        return Err(ActionParseError::BadArity { verb: verb.into(), expected: 1, got: 0 });
    }
    if let Ok(s) = serde_json::from_str::<String>(inner) {
        return Ok(s);
    }
    match serde_json::from_str::<Vec<serde_json::Value>>(&format!("[{inner}]")) {
        Ok(vals) if vals.len() != 1 => {
            Err(ActionParseError::BadArity { verb: verb.into(), expected: 1, got: vals.len() })
        }
        _ => Err(ActionParseError::Syntax(format!("{verb} expects a quoted string, got {inner}"))),
    }
}

/// Parses one action line in the canonical grammar.
pub fn parse_action(text: &str) -> Result<Action, ActionParseError> {
    let line = text.trim();
    let open = line
        .find('(')
        .ok_or_else(|| ActionParseError::Syntax(format!("expected verb(args), got '{line}'")))?;
    let verb = line[..open].trim();
    if !line.ends_with(')') {
        return Err(ActionParseError::Syntax(format!("missing closing parenthesis in '{line}'")));
    }
    let inner = &line[open + 1..line.len() - 1];
    match verb {
        "click" | "double_click" => {
            let a = int_args(verb, inner, 2)?;
            let (x, y) = (coord(a[0])?, coord(a[1])?);
            Ok(if verb == "click" { Action::Click { x, y } } else { Action::DoubleClick { x, y } })
        }
        "scroll" => {
            let a = int_args(verb, inner, 4)?;
            Ok(Action::Scroll { x: coord(a[0])?, y: coord(a[1])?, dx: coord(a[2])?, dy: coord(a[3])? })
        }
        "type" => Ok(Action::Type { text: string_arg(verb, inner)? }),
        "keypress" => Ok(Action::KeyPress { key: string_arg(verb, inner)? }),
        "wait" => {
            let parts: Vec<&str> = inner.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
            if parts.len() != 1 {
                return Err(ActionParseError::BadArity { verb: verb.into(), expected: 1, got: parts.len() });
            }
            let millis = parts[0]
                .parse::<u64>()
                .map_err(|_| ActionParseError::NonNumericCoordinate(parts[0].to_string()))?;
            Ok(Action::Wait { millis })
        }
        "finish" => {
            let payload = inner.trim();
            if payload.is_empty() {
                return Err(ActionParseError::BadArity { verb: verb.into(), expected: 1, got: 0 });
            }
            Ok(Action::Finish { summary_json: payload.to_string() })
        }
        other => Err(ActionParseError::UnknownVerb(other.to_string())),
    }
}

/// Splits a free-text model reply into reasoning and the action line, which
/// is the last non-blank line.
pub fn split_reply(reply: &str) -> (String, String) {
    let lines: Vec<&str> = reply.lines().collect();
    match lines.iter().rposition(|l| !l.trim().is_empty()) {
        Some(last) => (lines[..last].join("\n").trim().to_string(), lines[last].trim().to_string()),
        None => (String::new(), String::new()),
    }
}
