//! The `xri/...` topic tree and the JSON payloads carried on it.
//!
//! | topic                                   | payload                   | retained |
//! |-----------------------------------------|---------------------------|----------|
//! | `xri/context/{zone}/{source}/{kind}`    | [`ContextEvent`]          | no       |
//! | `xri/agent/{agent_id}/state`            | [`AgentStatePayload`]     | yes      |
//! | `xri/agent/{agent_id}/cmd`              | [`ContextEvent`] (Command)| no       |
//! | `xri/scenario/{zone}/situation`         | [`SituationPayload`]      | yes      |
//! | `xri/sys/clock`                         | [`ClockPayload`]          | no       |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::event::{check_version, decode_event, ContextEvent, EventKind, Label, SchemaError};
use crate::profile::MiraProfile;
use crate::situation::{PlantAlert, UserMode};
use crate::topic::{TopicFilter, TopicName};

pub const ROOT: &str = "xri";
pub const CLOCK_TOPIC: &str = "xri/sys/clock";
pub const ALL_FILTER: &str = "xri/#";
pub const CONTEXT_FILTER: &str = "xri/context/#";
pub const AGENT_CMD_FILTER: &str = "xri/agent/+/cmd";
pub const AGENT_STATE_FILTER: &str = "xri/agent/+/state";
pub const SITUATION_FILTER: &str = "xri/scenario/+/situation";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XriTopic {
    Context {
        zone: Label,
        source: Label,
        kind: EventKind,
    },
    AgentState {
        agent_id: Label,
    },
    AgentCmd {
        agent_id: Label,
    },
    Situation {
        zone: Label,
    },
    Clock,
}

impl XriTopic {
    pub fn to_topic(&self) -> TopicName {
        let s = match self {
            XriTopic::Context { zone, source, kind } => {
                format!("xri/context/{zone}/{source}/{}", kind.topic_level())
            }
            XriTopic::AgentState { agent_id } => format!("xri/agent/{agent_id}/state"),
            XriTopic::AgentCmd { agent_id } => format!("xri/agent/{agent_id}/cmd"),
            XriTopic::Situation { zone } => format!("xri/scenario/{zone}/situation"),
            XriTopic::Clock => CLOCK_TOPIC.to_owned(),
        };
        TopicName::new(s).expect("labels are topic-safe")
    }

    pub fn parse(topic: &TopicName) -> Result<Self, SchemaError> {
        let levels: Vec<&str> = topic.levels().collect();
        let label = |s: &str| Label::new(s).map_err(|_| SchemaError::Topic(topic.to_string()));
        match levels.as_slice() {
            ["xri", "context", zone, source, kind] => Ok(XriTopic::Context {
                zone: label(zone)?,
                source: label(source)?,
                kind: EventKind::from_topic_level(kind).ok_or_else(|| SchemaError::Topic(topic.to_string()))?,
            }),
            ["xri", "agent", id, "state"] => Ok(XriTopic::AgentState { agent_id: label(id)? }),
            ["xri", "agent", id, "cmd"] => Ok(XriTopic::AgentCmd { agent_id: label(id)? }),
            ["xri", "scenario", zone, "situation"] => Ok(XriTopic::Situation { zone: label(zone)? }),
            ["xri", "sys", "clock"] => Ok(XriTopic::Clock),
            _ => Err(SchemaError::Topic(topic.to_string())),
        }
    }

    /// Whether the topic carries retained state.
    pub fn is_retained(&self) -> bool {
        matches!(self, XriTopic::AgentState { .. } | XriTopic::Situation { .. })
    }
}

/// Checks a message against the topic schema. Topics outside the `xri`
/// root are not schema-checked and yield `None`.
pub fn check_message(topic: &TopicName, payload: &[u8]) -> Result<Option<XriTopic>, SchemaError> {
    if topic.levels().next() != Some(ROOT) {
        return Ok(None);
    }
    let parsed = XriTopic::parse(topic)?;
    match &parsed {
        XriTopic::Context { zone, source, kind } => {
            let e = decode_event(payload)?;
            if &e.zone != zone || &e.source != source || e.kind() != *kind {
                return Err(SchemaError::Topic(format!("{topic} does not match its payload")));
            }
        }
        XriTopic::AgentCmd { .. } => {
            if decode_event(payload)?.kind() != EventKind::Command {
                return Err(SchemaError::field("kind", "agent commands must be Command events"));
            }
        }
        XriTopic::AgentState { agent_id } => {
            if &AgentStatePayload::decode(payload)?.agent_id != agent_id {
                return Err(SchemaError::Topic(format!("{topic} does not match its payload")));
            }
        }
        XriTopic::Situation { zone } => {
            if &SituationPayload::decode(payload)?.zone != zone {
                return Err(SchemaError::Topic(format!("{topic} does not match its payload")));
            }
        }
        XriTopic::Clock => {
            ClockPayload::decode(payload)?;
        }
    }
    Ok(Some(parsed))
}

pub fn topic_for(e: &ContextEvent) -> TopicName {
    XriTopic::Context {
        zone: e.zone.clone(),
        source: e.source.clone(),
        kind: e.kind(),
    }
    .to_topic()
}

pub fn filter(s: &str) -> TopicFilter {
    TopicFilter::new(s).expect("static filter is valid")
}

/// A named actuation channel value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputValue {
    Bool(bool),
    Number(f64),
    Color([u8; 3]),
    Text(String),
}

pub type Outputs = BTreeMap<String, OutputValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStatePayload {
    pub v: u64,
    pub agent_id: Label,
    pub state: String,
    pub outputs: Outputs,
    pub profile: MiraProfile,
    pub ts: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomodoroView {
    pub phase: String,
    pub phase_started_ms: u64,
    /// End of the running phase; absent while paused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_ends_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationPayload {
    pub v: u64,
    pub zone: Label,
    pub user_mode: UserMode,
    pub plant_alerts: Vec<PlantAlert>,
    pub pomodoro: PomodoroView,
    pub ts: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockPayload {
    pub v: u64,
    pub ts: u64,
    /// Set on the last tick of a scripted run.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub end: bool,
}

fn decode_versioned<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, SchemaError> {
    let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| SchemaError::NotJson(e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| SchemaError::NotJson("expected an object".into()))?;
    check_version(obj)?;
    serde_json::from_value(v).map_err(|e| SchemaError::field("payload", e.to_string()))
}

impl AgentStatePayload {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state serializes")
    }
    pub fn decode(bytes: &[u8]) -> Result<Self, SchemaError> {
        decode_versioned(bytes)
    }
}

impl SituationPayload {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("situation serializes")
    }
    pub fn decode(bytes: &[u8]) -> Result<Self, SchemaError> {
        decode_versioned(bytes)
    }
}

impl ClockPayload {
    pub fn new(ts: u64, end: bool) -> Self {
        Self { v: 1, ts, end }
    }
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("clock serializes")
    }
    pub fn decode(bytes: &[u8]) -> Result<Self, SchemaError> {
        decode_versioned(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventValue;
    use proptest::prelude::*;

    #[test]
    fn presence_topic() {
        let e = ContextEvent::new("desk1", "cam0", EventValue::Presence(true), 0, 0).unwrap();
        assert_eq!(topic_for(&e).as_str(), "xri/context/desk1/cam0/presence");
    }

    #[test]
    fn fixed_topics_parse() {
        for s in [
            "xri/agent/plant/state",
            "xri/agent/plant/cmd",
            "xri/scenario/desk1/situation",
            "xri/sys/clock",
        ] {
            let t = TopicName::new(s).unwrap();
            assert_eq!(XriTopic::parse(&t).unwrap().to_topic(), t);
        }
        assert!(XriTopic::parse(&TopicName::new("xri/context/a/b/smell").unwrap()).is_err());
        assert!(XriTopic::parse(&TopicName::new("other/thing").unwrap()).is_err());
        assert!(XriTopic::parse(&TopicName::new("xri/agent//state").unwrap()).is_err());
    }

    #[test]
    fn output_value_json_shapes() {
        let mut o = Outputs::new();
        o.insert("avatar_scale".into(), OutputValue::Number(0.6));
        o.insert("ambient_effect".into(), OutputValue::Bool(false));
        o.insert("led_color".into(), OutputValue::Color([0, 255, 0]));
        o.insert("banner".into(), OutputValue::Text("hi".into()));
        let json = serde_json::to_string(&o).unwrap();
        assert_eq!(
            json,
            r#"{"ambient_effect":false,"avatar_scale":0.6,"banner":"hi","led_color":[0,255,0]}"#
        );
        assert_eq!(serde_json::from_str::<Outputs>(&json).unwrap(), o);
    }

    #[test]
    fn clock_payload() {
        assert_eq!(ClockPayload::new(5, false).encode(), br#"{"v":1,"ts":5}"#);
        assert_eq!(ClockPayload::new(5, true).encode(), br#"{"v":1,"ts":5,"end":true}"#);
        assert!(ClockPayload::decode(br#"{"v":3,"ts":5}"#).is_err());
        assert_eq!(ClockPayload::decode(br#"{"v":1,"ts":5,"end":true}"#).unwrap(), ClockPayload::new(5, true));
    }

    #[test]
    fn message_checks() {
        let t = |s: &str| TopicName::new(s).unwrap();
        let e = ContextEvent::new("desk1", "cam0", EventValue::Presence(true), 0, 0).unwrap();
        let bytes = crate::event::encode_event(&e);
        assert!(check_message(&t("xri/context/desk1/cam0/presence"), &bytes).unwrap().is_some());
        assert!(check_message(&t("xri/context/desk2/cam0/presence"), &bytes).is_err());
        assert!(check_message(&t("xri/context/desk1/cam0/light"), &bytes).is_err());
        assert!(check_message(&t("xri/agent/plant/cmd"), &bytes).is_err());
        assert!(check_message(&t("xri/unknown"), b"{}").is_err());
        assert_eq!(check_message(&t("lab/anything"), b"\xff").unwrap(), None);
        let cmd = ContextEvent::new("desk1", "ui", EventValue::command("resume", Vec::<String>::new()), 0, 0).unwrap();
        assert!(check_message(&t("xri/agent/plant/cmd"), &crate::event::encode_event(&cmd)).is_ok());
        assert!(check_message(&t("xri/sys/clock"), &ClockPayload::new(1, false).encode()).is_ok());
    }

    proptest! {
        #[test]
        fn context_topic_bijective(e in crate::event::tests::arb_event()) {
            let topic = topic_for(&e);
            let parsed = XriTopic::parse(&topic).unwrap();
            prop_assert_eq!(parsed.clone(), XriTopic::Context { zone: e.zone.clone(), source: e.source.clone(), kind: e.kind() });
            prop_assert_eq!(parsed.to_topic(), topic);
        }
    }
}
