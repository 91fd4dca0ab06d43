//! Hybrid-object agents as prioritized-rule state machines.
//!
//! An agent keeps the latest value of every context fact it has been sent
//! and, on each event, fires the first rule whose source state, trigger kind
//! and conditions all match. Deliberative agents run on the same machinery
//! with rule order standing in for desire priority.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::event::{Activity, ContextEvent, EventKind, EventValue, Label};
use crate::profile::{profile_violations, MiraProfile};
use crate::schema::{OutputValue, Outputs};
use crate::situation::UserMode;

/// Command verb the scenario uses to tell agents the zone's user mode.
pub const USER_MODE_VERB: &str = "user_mode";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fact {
    Presence,
    LightOn,
    Luminance,
    Activity,
    Moisture,
    UserMode,
    /// Verb of the triggering event when it is a command.
    Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub fact: Fact,
    pub op: Op,
    pub value: FactValue,
}

/// Source states of a rule: `"*"`, one name, or a list of names.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FromStates {
    #[default]
    Any,
    States(Vec<String>),
}

impl FromStates {
    pub fn contains(&self, state: &str) -> bool {
        match self {
            FromStates::Any => true,
            FromStates::States(s) => s.iter().any(|x| x == state),
        }
    }
}

impl Serialize for FromStates {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FromStates::Any => s.serialize_str("*"),
            FromStates::States(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for FromStates {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(String),
            Many(Vec<String>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::One(s) if s == "*" => FromStates::Any,
            Raw::One(s) => FromStates::States(vec![s]),
            Raw::Many(v) => FromStates::States(v),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(default)]
    pub from: FromStates,
    /// Trigger kinds; empty means any subscribed kind.
    #[serde(default)]
    pub on: BTreeSet<EventKind>,
    #[serde(default)]
    pub when: Vec<Condition>,
    /// Target state; absent keeps the current one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub agent_id: Label,
    pub zone: Label,
    pub profile: MiraProfile,
    pub states: Vec<String>,
    pub initial: String,
    #[serde(default)]
    pub initial_outputs: Outputs,
    pub subscribes: BTreeSet<EventKind>,
    pub rules: Vec<Rule>,
}

/// A spec problem, located by a JSON-style path within the spec.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct SpecError {
    pub path: String,
    pub message: String,
}

fn spec_err(path: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError {
        path: path.into(),
        message: message.into(),
    }
}

fn check_outputs(outputs: &Outputs, path: &str, errors: &mut Vec<SpecError>) {
    if let Some(v) = outputs.get("avatar_scale") {
        match v {
            OutputValue::Number(x) if (0.0..=1.0).contains(x) => {}
            _ => errors.push(spec_err(format!("{path}.avatar_scale"), "must be a number in [0, 1]")),
        }
    }
}

impl Fact {
    fn value_matches_type(self, v: &FactValue) -> bool {
        match self {
            Fact::Presence | Fact::LightOn => matches!(v, FactValue::Bool(_)),
            Fact::Luminance | Fact::Moisture => matches!(v, FactValue::Number(_)),
            Fact::Activity => matches!(v, FactValue::Text(s) if Activity::from_name(s).is_some()),
            Fact::UserMode => matches!(v, FactValue::Text(s) if user_mode_from_name(s).is_some()),
            Fact::Command => matches!(v, FactValue::Text(_)),
        }
    }

    fn is_numeric(self) -> bool {
        matches!(self, Fact::Luminance | Fact::Moisture)
    }
}

pub fn user_mode_from_name(s: &str) -> Option<UserMode> {
    [UserMode::Working, UserMode::Break, UserMode::Away]
        .into_iter()
        .find(|m| m.name() == s)
}

impl AgentSpec {
    /// Every problem with the spec, in declaration order.
    pub fn problems(&self) -> Vec<SpecError> {
        let mut errors = Vec::new();
        for v in profile_violations(&self.profile) {
            errors.push(spec_err("profile", v.to_string()));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.states.iter().enumerate() {
            if s.is_empty() || !seen.insert(s.as_str()) {
                errors.push(spec_err(format!("states[{i}]"), "state names must be unique and non-empty"));
            }
        }
        if self.states.is_empty() {
            errors.push(spec_err("states", "at least one state is required"));
        }
        if !seen.contains(self.initial.as_str()) {
            errors.push(spec_err("initial", format!("{:?} is not a declared state", self.initial)));
        }
        check_outputs(&self.initial_outputs, "initial_outputs", &mut errors);
        for (i, rule) in self.rules.iter().enumerate() {
            let path = format!("rules[{i}]");
            if let FromStates::States(from) = &rule.from {
                for (j, s) in from.iter().enumerate() {
                    if !seen.contains(s.as_str()) {
                        errors.push(spec_err(format!("{path}.from[{j}]"), format!("{s:?} is not a declared state")));
                    }
                }
            }
            if let Some(to) = &rule.to {
                if !seen.contains(to.as_str()) {
                    errors.push(spec_err(format!("{path}.to"), format!("{to:?} is not a declared state")));
                }
            }
            for k in &rule.on {
                if !self.subscribes.contains(k) {
                    errors.push(spec_err(format!("{path}.on"), format!("{} is not a subscribed kind", k.name())));
                }
            }
            for (j, c) in rule.when.iter().enumerate() {
                let cpath = format!("{path}.when[{j}]");
                if !c.fact.value_matches_type(&c.value) {
                    errors.push(spec_err(format!("{cpath}.value"), format!("wrong type for fact {:?}", c.fact)));
                }
                if !matches!(c.op, Op::Eq | Op::Ne) && !c.fact.is_numeric() {
                    errors.push(spec_err(format!("{cpath}.op"), "ordering needs a numeric fact"));
                }
            }
            check_outputs(&rule.outputs, &format!("{path}.outputs"), &mut errors);
        }
        errors
    }

    pub fn validate(&self) -> Result<(), Vec<SpecError>> {
        let errors = self.problems();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Latest context values seen by an agent. Unseen facts take the values of
/// an empty room: no presence, light off, Away, wet soil.
#[derive(Debug, Clone, PartialEq)]
pub struct Facts {
    pub presence: bool,
    pub light_on: bool,
    pub luminance: f64,
    pub activity: Activity,
    pub moisture: f64,
    pub user_mode: UserMode,
    pub command: Option<String>,
}

impl Default for Facts {
    fn default() -> Self {
        Self {
            presence: false,
            light_on: false,
            luminance: 0.0,
            activity: Activity::Away,
            moisture: 1.0,
            user_mode: UserMode::Away,
            command: None,
        }
    }
}

impl Facts {
    pub fn apply(&mut self, value: &EventValue) {
        self.command = None;
        match value {
            EventValue::Presence(p) => self.presence = *p,
            EventValue::LightLevel { on, mean_luminance } => {
                self.light_on = *on;
                self.luminance = *mean_luminance;
            }
            EventValue::Activity(a) => self.activity = *a,
            EventValue::Moisture(m) => self.moisture = *m,
            EventValue::Command { verb, args } => {
                if verb == USER_MODE_VERB {
                    if let Some(mode) = args.first().and_then(|a| user_mode_from_name(a)) {
                        self.user_mode = mode;
                    }
                }
                self.command = Some(verb.clone());
            }
        }
    }

    fn get(&self, fact: Fact) -> Option<FactValue> {
        Some(match fact {
            Fact::Presence => FactValue::Bool(self.presence),
            Fact::LightOn => FactValue::Bool(self.light_on),
            Fact::Luminance => FactValue::Number(self.luminance),
            Fact::Activity => FactValue::Text(self.activity.name().to_owned()),
            Fact::Moisture => FactValue::Number(self.moisture),
            Fact::UserMode => FactValue::Text(self.user_mode.name().to_owned()),
            Fact::Command => FactValue::Text(self.command.clone()?),
        })
    }
}

impl Condition {
    /// Missing facts never satisfy a condition.
    pub fn holds(&self, facts: &Facts) -> bool {
        let Some(actual) = facts.get(self.fact) else { return false };
        match (&actual, &self.value) {
            (FactValue::Number(a), FactValue::Number(b)) => match self.op {
                Op::Eq => a == b,
                Op::Ne => a != b,
                Op::Lt => a < b,
                Op::Le => a <= b,
                Op::Gt => a > b,
                Op::Ge => a >= b,
            },
            (a, b) => match self.op {
                Op::Eq => a == b,
                Op::Ne => a != b,
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Publish the agent's state, retained.
    PublishState { state: String, outputs: Outputs },
    /// Drive one actuation channel.
    Actuate { channel: String, value: OutputValue },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state_before: String,
    pub state_after: String,
    /// Index of the rule that fired.
    pub rule: Option<usize>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone)]
pub struct AgentInstance {
    spec: AgentSpec,
    state: String,
    outputs: Outputs,
    last_transition_ms: u64,
    facts: Facts,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct InvalidSpec(pub Vec<SpecError>);

impl fmt::Display for InvalidSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&msgs.join("; "))
    }
}

impl AgentInstance {
    pub fn new(spec: AgentSpec, now: u64) -> Result<Self, InvalidSpec> {
        spec.validate().map_err(InvalidSpec)?;
        Ok(Self {
            state: spec.initial.clone(),
            outputs: spec.initial_outputs.clone(),
            spec,
            last_transition_ms: now,
            facts: Facts::default(),
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn id(&self) -> &Label {
        &self.spec.agent_id
    }

    pub fn state(&self) -> &str {
        &self.state
    }

    pub fn outputs(&self) -> &Outputs {
        &self.outputs
    }

    pub fn facts(&self) -> &Facts {
        &self.facts
    }

    pub fn last_transition_ms(&self) -> u64 {
        self.last_transition_ms
    }

    pub fn subscribes(&self, kind: EventKind) -> bool {
        self.spec.subscribes.contains(&kind)
    }

    /// Feeds one event. Unsubscribed kinds leave the agent untouched. A fired
    /// rule publishes state only when the state or outputs change, and
    /// actuates only the channels whose value changed.
    pub fn step(&mut self, event: &ContextEvent, now: u64) -> StepOutcome {
        let before = self.state.clone();
        let identity = StepOutcome {
            state_before: before.clone(),
            state_after: before.clone(),
            rule: None,
            actions: Vec::new(),
        };
        let kind = event.kind();
        if !self.subscribes(kind) {
            return identity;
        }
        self.facts.apply(&event.value);
        let fired = self.spec.rules.iter().position(|r| {
            r.from.contains(&self.state)
                && (r.on.is_empty() || r.on.contains(&kind))
                && r.when.iter().all(|c| c.holds(&self.facts))
        });
        let Some(i) = fired else { return identity };
        let rule = &self.spec.rules[i];
        let mut actions = Vec::new();
        for (channel, value) in &rule.outputs {
            if self.outputs.get(channel) != Some(value) {
                actions.push(Action::Actuate {
                    channel: channel.clone(),
                    value: value.clone(),
                });
                self.outputs.insert(channel.clone(), value.clone());
            }
        }
        if let Some(to) = &rule.to {
            if *to != self.state {
                self.state = to.clone();
                self.last_transition_ms = now;
            }
        }
        if self.state != before || !actions.is_empty() {
            actions.insert(
                0,
                Action::PublishState {
                    state: self.state.clone(),
                    outputs: self.outputs.clone(),
                },
            );
        }
        StepOutcome {
            state_before: before,
            state_after: self.state.clone(),
            rule: Some(i),
            actions,
        }
    }
}

/// Parses a spec from JSON, reporting the path of the first bad field.
pub fn spec_from_json(v: &Value) -> Result<AgentSpec, SpecError> {
    serde_path_to_error::deserialize(v).map_err(|e| spec_err(e.path().to_string(), e.inner().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Agency, ControllerKind, Embodiment};
    use serde_json::json;

    fn profile() -> MiraProfile {
        MiraProfile {
            agency: Agency::Weak,
            agency_traits: BTreeSet::new(),
            corporeal_presence: Embodiment::new(0.5, 0.5),
            interactive_capacity: Embodiment::new(0.5, 0.5),
            controller_kind: ControllerKind::Fsm,
        }
    }

    fn lamp() -> AgentSpec {
        serde_json::from_value(json!({
            "agent_id": "lamp",
            "zone": "desk1",
            "profile": profile(),
            "states": ["Off", "On"],
            "initial": "Off",
            "subscribes": ["Presence", "LightLevel"],
            "rules": [
                {"from": "Off", "on": ["Presence"], "when": [{"fact": "presence", "op": "eq", "value": true}],
                 "to": "On", "outputs": {"avatar_scale": 1.0}},
                {"from": "*", "when": [{"fact": "luminance", "op": "gt", "value": 200.0}],
                 "to": "Off", "outputs": {"avatar_scale": 0.0}},
                {"from": ["On"], "on": ["Presence"], "to": "Off"}
            ]
        }))
        .unwrap()
    }

    fn ev(value: EventValue) -> ContextEvent {
        ContextEvent::new("desk1", "s", value, 0, 0).unwrap()
    }

    #[test]
    fn first_matching_rule_wins() {
        let mut a = AgentInstance::new(lamp(), 0).unwrap();
        let out = a.step(&ev(EventValue::Presence(true)), 10);
        assert_eq!((out.state_before.as_str(), out.state_after.as_str()), ("Off", "On"));
        assert_eq!(out.rule, Some(0));
        assert!(matches!(&out.actions[0], Action::PublishState { state, .. } if state == "On"));
        assert_eq!(a.last_transition_ms(), 10);
        let out = a.step(&ev(EventValue::Presence(false)), 20);
        assert_eq!(out.rule, Some(2));
        assert_eq!(a.state(), "Off");
    }

    #[test]
    fn unsubscribed_kind_is_identity() {
        let mut a = AgentInstance::new(lamp(), 0).unwrap();
        let before = a.facts().clone();
        let out = a.step(&ev(EventValue::Moisture(0.1)), 5);
        assert_eq!(out.rule, None);
        assert!(out.actions.is_empty());
        assert_eq!(a.facts(), &before);
    }

    #[test]
    fn unmatched_event_has_no_outputs() {
        let mut a = AgentInstance::new(lamp(), 0).unwrap();
        let out = a.step(&ev(EventValue::LightLevel { on: true, mean_luminance: 100.0 }), 5);
        assert_eq!(out.rule, None);
        assert!(out.actions.is_empty());
        assert_eq!(a.state(), "Off");
    }

    #[test]
    fn refiring_without_change_publishes_nothing() {
        let mut a = AgentInstance::new(lamp(), 0).unwrap();
        let bright = EventValue::LightLevel { on: true, mean_luminance: 250.0 };
        let first = a.step(&ev(bright.clone()), 1);
        assert_eq!(first.actions.len(), 2);
        let second = a.step(&ev(bright), 2);
        assert_eq!(second.rule, Some(1));
        assert!(second.actions.is_empty());
    }

    #[test]
    fn validation_names_fields() {
        let mut spec = lamp();
        spec.initial = "Dim".into();
        spec.rules[0].to = Some("Blinking".into());
        spec.rules[1].when[0].op = Op::Gt;
        spec.rules[1].when[0].fact = Fact::Activity;
        spec.rules[0].outputs.insert("avatar_scale".into(), OutputValue::Number(1.5));
        let paths: Vec<String> = spec.problems().into_iter().map(|e| e.path).collect();
        assert_eq!(
            paths,
            vec![
                "initial",
                "rules[0].to",
                "rules[0].outputs.avatar_scale",
                "rules[1].when[0].value",
                "rules[1].when[0].op"
            ]
        );
    }

    #[test]
    fn json_errors_carry_path() {
        let mut v = serde_json::to_value(lamp()).unwrap();
        v["rules"][1]["when"][0]["op"] = json!("approx");
        let err = spec_from_json(&v).unwrap_err();
        assert_eq!(err.path, "rules[1].when[0].op");
    }

    #[test]
    fn user_mode_command_updates_fact() {
        let mut f = Facts::default();
        f.apply(&EventValue::command(USER_MODE_VERB, ["Working"]));
        assert_eq!(f.user_mode, UserMode::Working);
        assert_eq!(f.command.as_deref(), Some(USER_MODE_VERB));
        f.apply(&EventValue::Presence(true));
        assert_eq!(f.command, None);
        assert_eq!(f.user_mode, UserMode::Working);
    }

    #[test]
    fn missing_command_fact_never_holds() {
        let c = Condition {
            fact: Fact::Command,
            op: Op::Ne,
            value: FactValue::Text("water".into()),
        };
        assert!(!c.holds(&Facts::default()));
    }
}
