//! Newline-delimited frame codec.
//!
//! One frame per line, encoded as single-line JSON. Frame ids strictly
//! increase per sender; `tool.result` and `plan.reply` frames answer a
//! prior frame via `in_reply_to`.

use std::collections::BTreeMap;

use agent_core::registry::{BackendClass, ReliabilityClass};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("framing error: {0}")]
    Framing(String),
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapDescriptor {
    pub verb: String,
    pub backend: BackendClass,
    pub cost: u64,
    pub reliability: ReliabilityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum FrameBody {
    #[serde(rename = "hello")]
    Hello { client: String },
    #[serde(rename = "task.submit")]
    TaskSubmit {
        task_id: String,
        policy: String,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_ticks: Option<u64>,
        /// "scripted" (default) or "external": external planners answer
        /// plan.request frames on this connection.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        planner: Option<String>,
    },
    #[serde(rename = "task.event")]
    TaskEvent { session: u64, event: serde_json::Value },
    #[serde(rename = "task.report")]
    TaskReport { session: u64, report: serde_json::Value },
    #[serde(rename = "plan.request")]
    PlanRequest { session: u64, observation: serde_json::Value },
    #[serde(rename = "plan.reply")]
    PlanReply { session: u64, reply: serde_json::Value },
    #[serde(rename = "tool.invoke")]
    ToolInvoke { verb: String, args: BTreeMap<String, String> },
    #[serde(rename = "tool.result")]
    ToolResult { status: String, detail: String, ticks_spent: u64 },
    #[serde(rename = "node.register")]
    NodeRegister { node_id: String, capabilities: Vec<CapDescriptor> },
    #[serde(rename = "error")]
    Error { code: String, message: String },
}

impl FrameBody {
    pub fn kind(&self) -> &'static str {
        match self {
            FrameBody::Hello { .. } => "hello",
            FrameBody::TaskSubmit { .. } => "task.submit",
            FrameBody::TaskEvent { .. } => "task.event",
            FrameBody::TaskReport { .. } => "task.report",
            FrameBody::PlanRequest { .. } => "plan.request",
            FrameBody::PlanReply { .. } => "plan.reply",
            FrameBody::ToolInvoke { .. } => "tool.invoke",
            FrameBody::ToolResult { .. } => "tool.result",
            FrameBody::NodeRegister { .. } => "node.register",
            FrameBody::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
    #[serde(flatten)]
    pub body: FrameBody,
}

impl Frame {
    pub fn new(id: u64, body: FrameBody) -> Self {
        Self { id, in_reply_to: None, body }
    }

    pub fn reply(id: u64, to: u64, body: FrameBody) -> Self {
        Self { id, in_reply_to: Some(to), body }
    }

    fn validate(&self) -> Result<(), FrameError> {
        let needs_reply = matches!(
            self.body,
            FrameBody::ToolResult { .. } | FrameBody::PlanReply { .. }
        );
        if needs_reply && self.in_reply_to.is_none() {
            return Err(FrameError::Schema(format!(
                "{} requires in_reply_to",
                self.body.kind()
            )));
        }
        Ok(())
    }
}

/// One line of JSON, newline-terminated.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut bytes = serde_json::to_vec(frame)
        .map_err(|e| FrameError::Framing(format!("encode failed: {e}")))?;
    debug_assert!(!bytes.contains(&b'\n'));
    bytes.push(b'\n');
    Ok(bytes)
}

/// Decode one line (with or without the trailing newline).
pub fn decode_frame(line: &[u8]) -> Result<Frame, FrameError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    if line.is_empty() {
        return Err(FrameError::Framing("empty line".into()));
    }
    let frame: Frame = serde_json::from_slice(line)
        .map_err(|e| FrameError::Framing(format!("bad frame: {e}")))?;
    frame.validate()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_round_trips() {
        let frame = Frame::new(1, FrameBody::Hello { client: "test".into() });
        let bytes = encode_frame(&frame).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), frame);
    }

    #[test]
    fn tool_result_without_reply_is_schema_error() {
        let frame = Frame::new(2, FrameBody::ToolResult {
            status: "ok".into(),
            detail: String::new(),
            ticks_spent: 3,
        });
        assert!(matches!(encode_frame(&frame), Err(FrameError::Schema(_))));
        let line = br#"{"id":2,"kind":"tool.result","payload":{"status":"ok","detail":"","ticks_spent":3}}"#;
        assert!(matches!(decode_frame(line), Err(FrameError::Schema(_))));
    }

    #[test]
    fn truncated_line_is_framing_error() {
        let frame = Frame::new(3, FrameBody::Hello { client: "x".into() });
        let bytes = encode_frame(&frame).unwrap();
        let truncated = &bytes[..bytes.len() - 10];
        assert!(matches!(decode_frame(truncated), Err(FrameError::Framing(_))));
    }
}
