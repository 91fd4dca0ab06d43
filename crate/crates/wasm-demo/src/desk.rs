//! The workstation scenario stepped by hand, with the retained state a
//! dashboard would hold.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use xri_core::event::{Activity, ContextEvent, EventValue};
use xri_core::scenario::{Effect, Scenario, ScenarioConfig};
use xri_core::topic::{TopicFilter, TopicName};

pub struct Desk {
    scenario: Scenario,
    retained: BTreeMap<String, Value>,
    seq: u64,
}

impl Desk {
    pub fn new() -> Self {
        let mut scenario = Scenario::new(ScenarioConfig::workstation()).expect("built-in scenario is valid");
        let effects = scenario.start(0);
        let mut desk = Desk {
            scenario,
            retained: BTreeMap::new(),
            seq: 0,
        };
        desk.absorb(effects);
        desk
    }

    pub fn now(&self) -> u64 {
        self.scenario.now()
    }

    /// Feeds one observation at the current time. `kind` is one of
    /// presence, light, moisture or activity.
    pub fn observe(&mut self, kind: &str, value: &str) -> Result<Vec<String>, String> {
        let (source, value) = match kind {
            "presence" => ("cam0", EventValue::Presence(parse_bool(value)?)),
            "light" => {
                let on = parse_bool(value)?;
                let mean_luminance = if on { 255.0 } else { 0.0 };
                ("lamp", EventValue::LightLevel { on, mean_luminance })
            }
            "moisture" => {
                let m = value.parse().map_err(|_| format!("moisture {value:?} is not a number"))?;
                ("soil", EventValue::Moisture(m))
            }
            "activity" => {
                let a = Activity::from_name(value).ok_or_else(|| format!("unknown activity {value:?}"))?;
                ("laptop", EventValue::Activity(a))
            }
            _ => return Err(format!("unknown observation {kind:?}")),
        };
        let zone = self.scenario.config().default_zone.as_str().to_string();
        let event = ContextEvent::new(&zone, source, value, self.now(), self.seq).map_err(|e| e.to_string())?;
        self.seq += 1;
        let effects = self.scenario.handle_event(&event);
        Ok(self.absorb(effects))
    }

    pub fn advance(&mut self, ms: u64) -> Vec<String> {
        let effects = self.scenario.advance_to(self.now() + ms);
        self.absorb(effects)
    }

    /// Retained topics and their payloads, as a dashboard would have them.
    pub fn snapshot(&self) -> Value {
        let cfg = self.scenario.config();
        let pomodoro = self.scenario.pomodoro();
        json!({
            "now": self.now(),
            "pomodoro": {
                "phase": pomodoro.label(),
                "phase_ends_ms": pomodoro.phase_ends_ms(&cfg.pomodoro),
            },
            "retained": self.retained,
        })
    }

    fn absorb(&mut self, effects: Vec<Effect>) -> Vec<String> {
        let mut trace = Vec::new();
        for e in effects {
            match e {
                Effect::Publish { topic, payload, retain: true } => {
                    let v = serde_json::from_slice(&payload).unwrap_or(Value::Null);
                    self.retained.insert(topic.as_str().to_string(), v);
                }
                Effect::Publish { .. } => {}
                Effect::Trace(r) => trace.push(r.to_line()),
            }
        }
        trace
    }
}

impl Default for Desk {
    fn default() -> Self {
        Self::new()
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(format!("{s:?} is not on/off")),
    }
}

/// Whether `filter` matches `topic`, or why one of them is malformed.
pub fn match_topic(filter: &str, topic: &str) -> Result<bool, String> {
    let f = TopicFilter::new(filter).map_err(|e| format!("filter: {e}"))?;
    let t = TopicName::new(topic).map_err(|e| format!("topic: {e}"))?;
    Ok(f.matches(&t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant(d: &Desk) -> Value {
        d.snapshot()["retained"]["xri/agent/plant/state"].clone()
    }

    #[test]
    fn light_and_presence_make_the_plant_thrive() {
        let mut d = Desk::new();
        assert_eq!(plant(&d)["state"], "Healthy");
        d.observe("light", "on").unwrap();
        d.observe("presence", "true").unwrap();
        assert_eq!(plant(&d)["state"], "Thriving");
        assert_eq!(plant(&d)["outputs"]["ambient_effect"], true);
        let trace = d.observe("light", "off").unwrap();
        assert!(trace.iter().any(|l| l.contains("\"state_after\":\"NeedsLight\"")));
        assert_eq!(plant(&d)["state"], "NeedsLight");
    }

    #[test]
    fn advancing_crosses_the_work_boundary() {
        let mut d = Desk::new();
        d.advance(1_499_999);
        assert_eq!(d.snapshot()["pomodoro"]["phase"], "Work");
        let trace = d.advance(1);
        assert!(trace.iter().any(|l| l.contains("\"type\":\"boundary\"")));
        assert_eq!(d.snapshot()["pomodoro"]["phase"], "Break");
        assert_eq!(d.snapshot()["pomodoro"]["phase_ends_ms"], 1_800_000);
    }

    #[test]
    fn presence_loss_reads_away() {
        let mut d = Desk::new();
        d.observe("presence", "on").unwrap();
        d.observe("activity", "Working").unwrap();
        let situation = |d: &Desk| d.snapshot()["retained"]["xri/scenario/desk1/situation"]["user_mode"].clone();
        assert_eq!(situation(&d), "Working");
        d.observe("presence", "off").unwrap();
        assert_eq!(situation(&d), "Away");
    }

    #[test]
    fn bad_input_is_reported() {
        let mut d = Desk::new();
        assert!(d.observe("smell", "on").is_err());
        assert!(d.observe("moisture", "1.5").is_err());
        assert!(d.observe("presence", "maybe").is_err());
    }

    #[test]
    fn topic_matcher() {
        assert_eq!(match_topic("xri/+/cmd", "xri/laptop/cmd"), Ok(true));
        assert_eq!(match_topic("xri/#", "xri"), Ok(true));
        assert_eq!(match_topic("xri/+", "xri/a/b"), Ok(false));
        assert!(match_topic("a/#/b", "a").unwrap_err().starts_with("filter"));
        assert!(match_topic("a", "a/+").unwrap_err().starts_with("topic"));
    }
}
