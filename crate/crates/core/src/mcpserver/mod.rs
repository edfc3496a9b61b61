//! JSON-RPC 2.0 tool server for programming agents, and the autonomous
//! fix-and-reverify loop built on the same tools.

mod autonomy;
mod rpc;
mod tools;

pub use autonomy::{autonomy_loop, LoopEntry, LoopOutcome, LoopReport};
pub use rpc::{handle_text, handle_value, serve_stdio, RpcError};
pub use tools::{call_tool, tool_descriptors, TOOL_NAMES};
