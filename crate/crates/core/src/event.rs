//! Context events and their canonical JSON payload.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const PAYLOAD_VERSION: u64 = 1;

/// A topic-safe identifier for zones, sources and agents: non-empty, no
/// `/`, `+`, `#` or NUL.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid label {0:?}: must be non-empty and free of '/', '+', '#'")]
pub struct LabelError(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Result<Self, LabelError> {
        let s = s.into();
        if s.is_empty() || s.contains(['/', '+', '#', '\0']) {
            return Err(LabelError(s));
        }
        Ok(Self(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Label {
    type Error = LabelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Presence,
    LightLevel,
    Activity,
    Moisture,
    Command,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::Presence,
        EventKind::LightLevel,
        EventKind::Activity,
        EventKind::Moisture,
        EventKind::Command,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Presence => "Presence",
            EventKind::LightLevel => "LightLevel",
            EventKind::Activity => "Activity",
            EventKind::Moisture => "Moisture",
            EventKind::Command => "Command",
        }
    }

    /// The last level of the context topic for this kind.
    pub fn topic_level(self) -> &'static str {
        match self {
            EventKind::Presence => "presence",
            EventKind::LightLevel => "light",
            EventKind::Activity => "activity",
            EventKind::Moisture => "moisture",
            EventKind::Command => "command",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn from_topic_level(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.topic_level() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    Sitting,
    Standing,
    Working,
    Away,
}

impl Activity {
    pub const ALL: [Activity; 4] = [Activity::Sitting, Activity::Standing, Activity::Working, Activity::Away];

    pub fn name(self) -> &'static str {
        match self {
            Activity::Sitting => "Sitting",
            Activity::Standing => "Standing",
            Activity::Working => "Working",
            Activity::Away => "Away",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventValue {
    Presence(bool),
    LightLevel { on: bool, mean_luminance: f64 },
    Activity(Activity),
    Moisture(f64),
    Command { verb: String, args: Vec<String> },
}

impl EventValue {
    pub fn kind(&self) -> EventKind {
        match self {
            EventValue::Presence(_) => EventKind::Presence,
            EventValue::LightLevel { .. } => EventKind::LightLevel,
            EventValue::Activity(_) => EventKind::Activity,
            EventValue::Moisture(_) => EventKind::Moisture,
            EventValue::Command { .. } => EventKind::Command,
        }
    }

    pub fn command(verb: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        EventValue::Command {
            verb: verb.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    fn check_range(&self) -> Result<(), SchemaError> {
        match self {
            EventValue::LightLevel { mean_luminance, .. } if !(0.0..=255.0).contains(mean_luminance) => {
                Err(SchemaError::field("value.mean_luminance", "must lie in [0, 255]"))
            }
            EventValue::Moisture(m) if !(0.0..=1.0).contains(m) => {
                Err(SchemaError::field("value", "moisture must lie in [0, 1]"))
            }
            EventValue::Command { verb, .. } if verb.is_empty() => {
                Err(SchemaError::field("value.verb", "must be non-empty"))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            EventValue::Presence(b) => json!(b),
            EventValue::LightLevel { on, mean_luminance } => {
                json!({ "on": on, "mean_luminance": mean_luminance })
            }
            EventValue::Activity(a) => json!(a.name()),
            EventValue::Moisture(m) => json!(m),
            EventValue::Command { verb, args } => json!({ "verb": verb, "args": args }),
        }
    }

    fn from_json(kind: EventKind, v: &Value) -> Result<Self, SchemaError> {
        let value = match kind {
            EventKind::Presence => EventValue::Presence(
                v.as_bool()
                    .ok_or_else(|| SchemaError::field("value", "Presence expects a boolean"))?,
            ),
            EventKind::LightLevel => {
                let obj = v
                    .as_object()
                    .ok_or_else(|| SchemaError::field("value", "LightLevel expects an object"))?;
                expect_keys(obj, &["on", "mean_luminance"], "value")?;
                EventValue::LightLevel {
                    on: obj["on"]
                        .as_bool()
                        .ok_or_else(|| SchemaError::field("value.on", "expects a boolean"))?,
                    mean_luminance: obj["mean_luminance"]
                        .as_f64()
                        .ok_or_else(|| SchemaError::field("value.mean_luminance", "expects a number"))?,
                }
            }
            EventKind::Activity => {
                let s = v
                    .as_str()
                    .ok_or_else(|| SchemaError::field("value", "Activity expects a string"))?;
                EventValue::Activity(
                    Activity::from_name(s)
                        .ok_or_else(|| SchemaError::field("value", format!("unknown activity {s:?}")))?,
                )
            }
            EventKind::Moisture => EventValue::Moisture(
                v.as_f64()
                    .ok_or_else(|| SchemaError::field("value", "Moisture expects a number"))?,
            ),
            EventKind::Command => {
                let obj = v
                    .as_object()
                    .ok_or_else(|| SchemaError::field("value", "Command expects an object"))?;
                expect_keys(obj, &["verb", "args"], "value")?;
                let verb = obj["verb"]
                    .as_str()
                    .ok_or_else(|| SchemaError::field("value.verb", "expects a string"))?
                    .to_owned();
                let args = obj["args"]
                    .as_array()
                    .ok_or_else(|| SchemaError::field("value.args", "expects an array"))?
                    .iter()
                    .map(|a| a.as_str().map(str::to_owned))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| SchemaError::field("value.args", "expects strings"))?;
                EventValue::Command { verb, args }
            }
        };
        value.check_range()?;
        Ok(value)
    }
}

/// A timestamped, zone-scoped observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEvent {
    pub zone: Label,
    pub source: Label,
    pub value: EventValue,
    /// Milliseconds on the runtime clock.
    pub ts: u64,
    /// Per-source sequence number.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("payload is not a JSON object: {0}")]
    NotJson(String),
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("unsupported payload version {0}")]
    Version(String),
    #[error("unknown event kind {0:?}")]
    UnknownKind(String),
    #[error("topic does not belong to the schema: {0}")]
    Topic(String),
}

impl SchemaError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SchemaError::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

fn expect_keys(obj: &Map<String, Value>, keys: &[&str], ctx: &str) -> Result<(), SchemaError> {
    for k in keys {
        if !obj.contains_key(*k) {
            return Err(SchemaError::field(format!("{ctx}.{k}"), "missing"));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(SchemaError::field(format!("{ctx}.{extra}"), "unknown field"));
    }
    Ok(())
}

fn get_u64(obj: &Map<String, Value>, key: &str) -> Result<u64, SchemaError> {
    obj.get(key)
        .ok_or_else(|| SchemaError::field(key, "missing"))?
        .as_u64()
        .ok_or_else(|| SchemaError::field(key, "expects a non-negative integer"))
}

fn get_label(obj: &Map<String, Value>, key: &str) -> Result<Label, SchemaError> {
    let s = obj
        .get(key)
        .ok_or_else(|| SchemaError::field(key, "missing"))?
        .as_str()
        .ok_or_else(|| SchemaError::field(key, "expects a string"))?;
    Label::new(s).map_err(|e| SchemaError::field(key, e.to_string()))
}

/// Checks the payload version field shared by every schema object.
pub(crate) fn check_version(obj: &Map<String, Value>) -> Result<(), SchemaError> {
    match obj.get("v") {
        None => Err(SchemaError::field("v", "missing")),
        Some(v) if v.as_u64() == Some(PAYLOAD_VERSION) => Ok(()),
        Some(v) => Err(SchemaError::Version(v.to_string())),
    }
}

impl ContextEvent {
    pub fn new(
        zone: &str,
        source: &str,
        value: EventValue,
        ts: u64,
        seq: u64,
    ) -> Result<Self, SchemaError> {
        let zone = Label::new(zone).map_err(|e| SchemaError::field("zone", e.to_string()))?;
        let source = Label::new(source).map_err(|e| SchemaError::field("source", e.to_string()))?;
        value.check_range()?;
        Ok(Self {
            zone,
            source,
            value,
            ts,
            seq,
        })
    }

    pub fn kind(&self) -> EventKind {
        self.value.kind()
    }

    pub fn to_json(&self) -> Value {
        // Field order is fixed by the wire struct below.
        serde_json::to_value(self.wire()).expect("event serializes")
    }

    fn wire(&self) -> WireEvent<'_> {
        WireEvent {
            v: PAYLOAD_VERSION,
            zone: self.zone.as_str(),
            source: self.source.as_str(),
            kind: self.kind().name(),
            value: self.value.to_json(),
            ts: self.ts,
            seq: self.seq,
        }
    }
}

#[derive(Serialize)]
struct WireEvent<'a> {
    v: u64,
    zone: &'a str,
    source: &'a str,
    kind: &'a str,
    value: Value,
    ts: u64,
    seq: u64,
}

/// Canonical payload: `{"v":1,"zone":..,"source":..,"kind":..,"value":..,"ts":..,"seq":..}`.
pub fn encode_event(e: &ContextEvent) -> Vec<u8> {
    serde_json::to_vec(&e.wire()).expect("event serializes")
}

pub fn decode_event(bytes: &[u8]) -> Result<ContextEvent, SchemaError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| SchemaError::NotJson(e.to_string()))?;
    event_from_json(&v)
}

pub fn event_from_json(v: &Value) -> Result<ContextEvent, SchemaError> {
    let obj = v
        .as_object()
        .ok_or_else(|| SchemaError::NotJson("expected an object".into()))?;
    check_version(obj)?;
    for key in ["zone", "source", "kind", "value", "ts", "seq"] {
        if !obj.contains_key(key) {
            return Err(SchemaError::field(key, "missing"));
        }
    }
    if let Some(extra) = obj
        .keys()
        .find(|k| !["v", "zone", "source", "kind", "value", "ts", "seq"].contains(&k.as_str()))
    {
        return Err(SchemaError::field(extra.clone(), "unknown field"));
    }
    let kind_name = obj["kind"]
        .as_str()
        .ok_or_else(|| SchemaError::field("kind", "expects a string"))?;
    let kind = EventKind::from_name(kind_name).ok_or_else(|| SchemaError::UnknownKind(kind_name.into()))?;
    Ok(ContextEvent {
        zone: get_label(obj, "zone")?,
        source: get_label(obj, "source")?,
        value: EventValue::from_json(kind, &obj["value"])?,
        ts: get_u64(obj, "ts")?,
        seq: get_u64(obj, "seq")?,
    })
}
