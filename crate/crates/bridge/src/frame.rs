//! Text frames exchanged with browser clients.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub topic: String,
    pub payload: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrokerStatus {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ForbiddenTopic,
    InvalidPayload,
    BadFrame,
    BrokerDown,
    /// The client fell too far behind the live stream and is disconnected.
    Lagged,
}

/// Bridge to browser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Downstream {
    /// `payload` is the message parsed as JSON, or a string when it is not
    /// JSON; `ts` is the bridge's receipt time in Unix milliseconds.
    Event { topic: String, payload: Value, ts: u64 },
    Snapshot { states: Vec<SnapshotEntry> },
    Status { broker: BrokerStatus },
    Error { code: ErrorCode, message: String },
    Ping,
    Pong,
}

/// Browser to bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Upstream {
    Publish {
        topic: String,
        payload: Value,
        #[serde(default)]
        retain: bool,
    },
    Ping,
    Pong,
}

impl Downstream {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Downstream::Error {
            code,
            message: message.into(),
        }
    }
}

/// Message bytes as a JSON value: parsed when possible, else a lossy string.
/// An empty payload (a cleared retained topic) is `null`.
pub fn payload_value(bytes: &[u8]) -> Value {
    if bytes.is_empty() {
        return Value::Null;
    }
    serde_json::from_slice(bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(bytes).into_owned()))
}
