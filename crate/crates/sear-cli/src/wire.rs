//! The v1 NDJSON wire protocol between the capture client and the pipeline.
//!
//! Every message is one UTF-8 line `{"v":1,"type":...,"payload":...}`.
//! Decoding rejects unknown versions and types; encode∘decode is the
//! identity on every message.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sear_core::model::{SocialContextFrame, SocialProfile, Utterance};

/// Protocol version this build speaks.
pub const WIRE_VERSION: u32 = 1;

/// Control payloads: conversation lifecycle and error reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ControlMessage {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ControlMessage {
    pub fn new(kind: &str) -> ControlMessage {
        ControlMessage { kind: kind.to_string(), detail: None }
    }

    pub fn with_detail(kind: &str, detail: impl Into<String>) -> ControlMessage {
        ControlMessage { kind: kind.to_string(), detail: Some(detail.into()) }
    }
}

/// All v1 message types.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    ContextFrame(SocialContextFrame),
    ProfileUpdate(SocialProfile),
    TranscriptExport(Utterance),
    Control(ControlMessage),
}

/// Wire protocol failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("unsupported wire version {0}")]
    UnknownVersion(u64),
    #[error("unknown message type '{0}'")]
    UnknownType(String),
    #[error("malformed wire line: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    v: u64,
    #[serde(rename = "type")]
    kind: String,
    payload: Value,
}

fn type_name(message: &WireMessage) -> &'static str {
    match message {
        WireMessage::ContextFrame(_) => "context_frame",
        WireMessage::ProfileUpdate(_) => "profile_update",
        WireMessage::TranscriptExport(_) => "transcript_export",
        WireMessage::Control(_) => "control",
    }
}

/// Encode a message as a single NDJSON line (no trailing newline).
pub fn wire_encode(message: &WireMessage) -> String {
    let payload = match message {
        WireMessage::ContextFrame(frame) => serde_json::to_value(frame),
        WireMessage::ProfileUpdate(profile) => serde_json::to_value(profile),
        WireMessage::TranscriptExport(utterance) => serde_json::to_value(utterance),
        WireMessage::Control(control) => serde_json::to_value(control),
    }
    .expect("payload serializes");
    let envelope = Envelope { v: u64::from(WIRE_VERSION), kind: type_name(message).to_string(), payload };
    serde_json::to_string(&envelope).expect("envelope serializes")
}

/// Decode one wire line.
pub fn wire_decode(line: &str) -> Result<WireMessage, WireError> {
    let envelope: Envelope =
        serde_json::from_str(line).map_err(|e| WireError::Malformed(e.to_string()))?;
    if envelope.v != u64::from(WIRE_VERSION) {
        return Err(WireError::UnknownVersion(envelope.v));
    }
    let payload = envelope.payload;
    let parse = |e: serde_json::Error| WireError::Malformed(e.to_string());
    match envelope.kind.as_str() {
        "context_frame" => Ok(WireMessage::ContextFrame(serde_json::from_value(payload).map_err(parse)?)),
        "profile_update" => Ok(WireMessage::ProfileUpdate(serde_json::from_value(payload).map_err(parse)?)),
        "transcript_export" => {
            Ok(WireMessage::TranscriptExport(serde_json::from_value(payload).map_err(parse)?))
        }
        "control" => Ok(WireMessage::Control(serde_json::from_value(payload).map_err(parse)?)),
        other => Err(WireError::UnknownType(other.to_string())),
    }
}
