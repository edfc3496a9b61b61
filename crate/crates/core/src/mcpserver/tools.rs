use std::sync::Arc;

use serde_json::{json, Value};

use super::rpc::RpcError;
use crate::reqmodel::RequirementState;
use crate::storeapi::{Service, ServiceError};

pub const TOOL_NAMES: [&str; 4] = ["list_requirements", "start_verification", "get_feedback", "get_run_status"];

/// Tool names, descriptions and JSON input schemas.
pub fn tool_descriptors() -> Value {
    json!([
        {
            "name": "list_requirements",
            "description": "List the requirements of a setup with their verification state and per-criterion verdicts.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "setup_id": {"type": "string"},
                    "status_filter": {
                        "description": "Only return requirements in these states.",
                        "oneOf": [
                            {"$ref": "#/$defs/state"},
                            {"type": "array", "items": {"$ref": "#/$defs/state"}}
                        ]
                    }
                },
                "required": ["setup_id"],
                "$defs": {"state": {"enum": ["unverified", "met", "partially_met", "unmet", "failed"]}}
            }
        },
        {
            "name": "start_verification",
            "description": "Queue a verification run for one requirement and return its run id immediately.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "requirement_id": {"type": "string"},
                    "setup_id": {"type": "string", "description": "Required when the requirement id exists in several setups."}
                },
                "required": ["requirement_id"]
            }
        },
        {
            "name": "get_feedback",
            "description": "Explanations for the unmet acceptance criteria of the latest completed verification.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "requirement_id": {"type": "string"},
                    "setup_id": {"type": "string"}
                },
                "required": ["requirement_id"]
            }
        },
        {
            "name": "get_run_status",
            "description": "Poll the status of a verification run.",
            "inputSchema": {
                "type": "object",
                "properties": {"run_id": {"type": "string"}},
                "required": ["run_id"]
            }
        }
    ])
}

fn str_arg<'a>(args: &'a Value, key: &str) -> Result<&'a str, RpcError> {
    args.get(key).and_then(Value::as_str).ok_or_else(|| RpcError::invalid_params(format!("missing string argument '{key}'")))
}

fn opt_str_arg<'a>(args: &'a Value, key: &str) -> Result<Option<&'a str>, RpcError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(RpcError::invalid_params(format!("argument '{key}' must be a string"))),
    }
}

fn state_filter(args: &Value) -> Result<Option<Vec<RequirementState>>, RpcError> {
    let parse = |v: &Value| {
        v.as_str()
            .and_then(RequirementState::parse)
            .ok_or_else(|| RpcError::invalid_params(format!("bad status_filter entry {v}")))
    };
    match args.get("status_filter") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => items.iter().map(parse).collect::<Result<_, _>>().map(Some),
        Some(v) => Ok(Some(vec![parse(v)?])),
    }
}

/// Runs one tool and returns its JSON result.
pub fn call_tool(svc: &Arc<Service>, name: &str, args: &Value) -> Result<Value, RpcError> {
    if !args.is_object() && !args.is_null() {
        return Err(RpcError::invalid_params("arguments must be an object"));
    }
    match name {
        "list_requirements" => {
            let setup_id = str_arg(args, "setup_id")?;
            let filter = state_filter(args)?;
            let reqs = svc.requirements(setup_id)?;
            let rows: Vec<Value> = reqs
                .iter()
                .filter(|r| filter.as_ref().is_none_or(|f| f.contains(&r.state)))
                .map(|r| {
                    json!({
                        "id": r.id,
                        "title": r.title,
                        "state": r.state,
                        "criteria": r.criteria.iter().map(|c| json!({"id": c.id, "verdict": c.verdict})).collect::<Vec<_>>(),
                    })
                })
                .collect();
            Ok(Value::Array(rows))
        }
        "start_verification" => {
            let req_id = str_arg(args, "requirement_id")?;
            let (setup_id, _) = svc.resolve_requirement(opt_str_arg(args, "setup_id")?, req_id)?;
            let ids = svc.start_verification(&setup_id, Some(&[req_id.to_string()]), None)?;
            Ok(json!({ "run_id": ids[0], "setup_id": setup_id }))
        }
        "get_feedback" => {
            let req_id = str_arg(args, "requirement_id")?;
            let fb = svc.feedback(opt_str_arg(args, "setup_id")?, req_id)?;
            Ok(serde_json::to_value(fb).expect("feedback serializes"))
        }
        "get_run_status" => {
            let view = svc.run_status(str_arg(args, "run_id")?)?;
            Ok(serde_json::to_value(view).expect("status serializes"))
        }
        other => Err(RpcError::method_not_found(other)),
    }
}

impl From<ServiceError> for RpcError {
    fn from(e: ServiceError) -> Self {
        let (code, kind) = match &e {
            ServiceError::UnknownSetup(_) => (-32001, "UnknownSetup"),
            ServiceError::UnknownRequirement(_) => (-32002, "UnknownRequirement"),
            ServiceError::AlreadyRunning { .. } => (-32003, "AlreadyRunning"),
            ServiceError::NeverVerified(_) => (-32004, "NeverVerified"),
            ServiceError::UnknownRun(_) => (-32005, "UnknownRun"),
            ServiceError::AmbiguousRequirement(_) => (-32006, "AmbiguousRequirement"),
            ServiceError::LoopInProgress(_) => (-32007, "LoopInProgress"),
            ServiceError::BadRequest(_) => (-32602, "InvalidParams"),
            ServiceError::Malformed(_) | ServiceError::App(_) => (-32008, "InvalidInput"),
            ServiceError::Store(_) => (-32603, "InternalError"),
        };
        RpcError { code, message: e.to_string(), data: Some(json!({ "kind": kind })) }
    }
}
