use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use super::tools::{call_tool, tool_descriptors, TOOL_NAMES};
use crate::storeapi::Service;

pub const PROTOCOL_VERSION: &str = "2024-11-05";

/// A JSON-RPC error object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), data: None }
    }
    pub fn parse_error(msg: impl Into<String>) -> Self {
        Self::new(-32700, msg)
    }
    pub fn invalid_request(msg: impl Into<String>) -> Self {
        Self::new(-32600, msg)
    }
    pub fn method_not_found(method: &str) -> Self {
        Self::new(-32601, format!("method not found: {method}"))
    }
    pub fn invalid_params(msg: impl Into<String>) -> Self {
        Self::new(-32602, msg)
    }
}

fn reply(id: Value, outcome: Result<Value, RpcError>) -> Value {
    match outcome {
        Ok(result) => json!({ "jsonrpc": "2.0", "id": id, "result": result }),
        Err(error) => json!({ "jsonrpc": "2.0", "id": id, "error": error }),
    }
}

fn dispatch(svc: &Arc<Service>, method: &str, params: &Value) -> Result<Value, RpcError> {
    match method {
        "initialize" => Ok(json!({
            "protocolVersion": PROTOCOL_VERSION,
            "serverInfo": { "name": "reqcheck", "version": env!("CARGO_PKG_VERSION") },
            "capabilities": { "tools": {} }
        })),
        "ping" => Ok(json!({})),
        "tools/list" => Ok(json!({ "tools": tool_descriptors() })),
        "tools/call" => {
            let name = params
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| RpcError::invalid_params("tools/call needs a tool name"))?;
            if !TOOL_NAMES.contains(&name) {
                return Err(RpcError::invalid_params(format!("unknown tool {name}")));
            }
            let args = params.get("arguments").cloned().unwrap_or(Value::Null);
            let value = call_tool(svc, name, &args)?;
            Ok(json!({
                "content": [{ "type": "text", "text": value.to_string() }],
                "isError": false
            }))
        }
        m if TOOL_NAMES.contains(&m) => call_tool(svc, m, params),
        other => Err(RpcError::method_not_found(other)),
    }
}

fn handle_one(svc: &Arc<Service>, msg: Value) -> Option<Value> {
    let Value::Object(obj) = msg else {
        return Some(reply(Value::Null, Err(RpcError::invalid_request("request must be an object"))));
    };
    let id = obj.get("id").cloned();
    if let Some(id) = &id {
        if !(id.is_string() || id.is_number() || id.is_null()) {
            return Some(reply(Value::Null, Err(RpcError::invalid_request("id must be a string or number"))));
        }
    }
    let answer = |outcome| id.clone().map(|id| reply(id, outcome));
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Some(reply(id.unwrap_or(Value::Null), Err(RpcError::invalid_request("jsonrpc must be \"2.0\""))));
    }
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return Some(reply(id.unwrap_or(Value::Null), Err(RpcError::invalid_request("missing method"))));
    };
    let params = obj.get("params").cloned().unwrap_or(Value::Null);
    if !(params.is_object() || params.is_array() || params.is_null()) {
        return answer(Err(RpcError::invalid_params("params must be structured")));
    }
    answer(dispatch(svc, method, &params))
}

/// Handles a request or batch; `None` when nothing needs to be sent back
/// (notifications only).
pub fn handle_value(svc: &Arc<Service>, msg: Value) -> Option<Value> {
    match msg {
        Value::Array(items) if items.is_empty() => {
            Some(reply(Value::Null, Err(RpcError::invalid_request("empty batch"))))
        }
        Value::Array(items) => {
            let out: Vec<Value> = items.into_iter().filter_map(|m| handle_one(svc, m)).collect();
            (!out.is_empty()).then_some(Value::Array(out))
        }
        other => handle_one(svc, other),
    }
}

pub fn handle_text(svc: &Arc<Service>, text: &str) -> Option<String> {
    let out = match serde_json::from_str::<Value>(text) {
        Ok(v) => handle_value(svc, v),
        Err(e) => Some(reply(Value::Null, Err(RpcError::parse_error(e.to_string())))),
    };
    out.map(|v| v.to_string())
}

/// Line-delimited JSON-RPC over a byte stream, one message per line.
pub fn serve_stdio(svc: &Arc<Service>, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(out) = handle_text(svc, &line) {
            writeln!(output, "{out}")?;
            output.flush()?;
        }
    }
    Ok(())
}
