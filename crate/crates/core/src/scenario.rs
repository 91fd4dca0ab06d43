//! The smart-workstation scenario: agents, the pomodoro timer and per-zone
//! situation classification, driven by one ordered stream of inputs.
//!
//! [`Scenario`] is a pure state machine. Each call returns the effects it
//! produced (fabric publications and trace records) so the same engine runs
//! over a live broker or offline over a pipeline's output.

use std::collections::{BTreeMap, BTreeSet};
use std::mem;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{Action, AgentInstance, AgentSpec, USER_MODE_VERB};
use crate::detect::DetectorConfig;
use crate::event::{decode_event, Activity, ContextEvent, EventKind, EventValue, Label, SchemaError};
use crate::pipeline::{PipelineItem, PipelineOptions};
use crate::pomodoro::{pomodoro_resume, pomodoro_tick, PhaseChange, PomodoroConfig, PomodoroState};
use crate::schema::{AgentStatePayload, ClockPayload, PomodoroView, SituationPayload, XriTopic};
use crate::situation::{classify_situation, SituationSet, ZoneObservations};
use crate::topic::{TopicFilter, TopicName};

/// Command verb that resumes a timer paused at a phase boundary.
pub const RESUME_VERB: &str = "resume";
/// Source label of events the scenario synthesizes for its agents.
pub const SCENARIO_SOURCE: &str = "scenario";

const SETTLE_LIMIT: usize = 8;

fn default_zone() -> Label {
    Label::new("desk1").expect("static label")
}

fn default_tick_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_zone")]
    pub default_zone: Label,
    /// Zone of each sensor source; unlisted sources use `default_zone`.
    #[serde(default)]
    pub zones: BTreeMap<Label, Label>,
    #[serde(default)]
    pub pomodoro: PomodoroConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    pub agents: Vec<AgentSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}{path}: {message}", location.map(|(l, c)| format!("line {l}, column {c}: ")).unwrap_or_default())]
pub struct ConfigError {
    /// JSON path of the offending field, `.` for the document root.
    pub path: String,
    pub location: Option<(usize, usize)>,
    pub message: String,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            ConfigError {
                path: e.path().to_string(),
                location: Some((inner.line(), inner.column())),
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |path: String, message: String| ConfigError {
            path,
            location: None,
            message,
        };
        self.pomodoro
            .validate()
            .map_err(|m| err("pomodoro".into(), m.into()))?;
        self.detector
            .validate()
            .map_err(|e| err("detector".into(), e.to_string()))?;
        let mut ids = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if let Some(e) = a.problems().into_iter().next() {
                return Err(err(format!("agents[{i}].{}", e.path), e.message));
            }
            if !ids.insert(&a.agent_id) {
                return Err(err(format!("agents[{i}].agent_id"), format!("duplicate agent id {}", a.agent_id)));
            }
        }
        Ok(())
    }

    pub fn pipeline_options(&self, seed: Option<u64>) -> PipelineOptions {
        PipelineOptions {
            default_zone: self.default_zone.clone(),
            zones: self.zones.clone(),
            tick_ms: self.tick_ms,
            seed,
        }
    }

    /// The three workstation agents in `default_zone` with default timing.
    pub fn workstation() -> Self {
        let zone = default_zone();
        Self {
            agents: crate::workstation::default_agents(&zone),
            default_zone: zone,
            zones: BTreeMap::new(),
            pomodoro: PomodoroConfig::default(),
            detector: DetectorConfig::default(),
            tick_ms: default_tick_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    AgentId(Label),
    /// The pomodoro timer or a zone's situation.
    Scenario(String),
}

/// One line of the step trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ts: u64,
    #[serde(flatten)]
    pub actor: Actor,
    pub event: Value,
    pub state_before: Option<String>,
    pub state_after: String,
    pub outputs: Value,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace record serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Publish {
        topic: TopicName,
        payload: Vec<u8>,
        retain: bool,
    },
    Trace(TraceRecord),
}

/// What became of an inbound fabric message.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Handled,
    /// Not addressed to the scenario (including its own publications).
    Ignored,
    Dropped(SchemaError),
    /// The final clock tick of a scripted run.
    End,
}

#[derive(Debug, Default)]
struct ZoneState {
    presence: Option<bool>,
    activity: Option<Activity>,
    last: Option<(SituationSet, &'static str)>,
    seq: u64,
}

#[derive(Debug)]
pub struct Scenario {
    cfg: ScenarioConfig,
    agents: Vec<AgentInstance>,
    state_seq: Vec<u64>,
    zones: BTreeMap<Label, ZoneState>,
    pomodoro: PomodoroState,
    now: u64,
    started: bool,
    synth_seq: u64,
    dropped: u64,
    effects: Vec<Effect>,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let agents = cfg
            .agents
            .iter()
            .map(|s| AgentInstance::new(s.clone(), 0).expect("validated"))
            .collect::<Vec<_>>();
        let mut zones = BTreeMap::new();
        zones.insert(cfg.default_zone.clone(), ZoneState::default());
        for a in &agents {
            zones.entry(a.spec().zone.clone()).or_default();
        }
        Ok(Self {
            state_seq: vec![0; agents.len()],
            agents,
            zones,
            pomodoro: PomodoroState::start(0),
            now: 0,
            started: false,
            synth_seq: 0,
            dropped: 0,
            effects: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[AgentInstance] {
        &self.agents
    }

    pub fn pomodoro(&self) -> &PomodoroState {
        &self.pomodoro
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Malformed inbound messages discarded so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn situation(&self, zone: &Label) -> Option<&SituationSet> {
        self.zones.get(zone)?.last.as_ref().map(|(s, _)| s)
    }

    /// Filters the scenario must be subscribed to.
    pub fn subscriptions(&self) -> Vec<TopicFilter> {
        let mut out = BTreeSet::new();
        for a in &self.agents {
            let zone = &a.spec().zone;
            for k in &a.spec().subscribes {
                out.insert(format!("xri/context/{zone}/+/{}", k.topic_level()));
            }
            if a.subscribes(EventKind::Command) {
                out.insert(format!("xri/agent/{}/cmd", a.id()));
            }
        }
        for zone in self.zones.keys() {
            for k in [EventKind::Presence, EventKind::Activity, EventKind::Command] {
                out.insert(format!("xri/context/{zone}/+/{}", k.topic_level()));
            }
        }
        out.insert(crate::schema::CLOCK_TOPIC.to_owned());
        out.into_iter()
            .map(|f| TopicFilter::new(f).expect("labels are topic-safe"))
            .collect()
    }

    /// Starts the timer and publishes every agent's initial state and each
    /// zone's situation.
    pub fn start(&mut self, now: u64) -> Vec<Effect> {
        if self.started {
            return Vec::new();
        }
        self.started = true;
        self.now = now;
        self.pomodoro = PomodoroState::start(now);
        self.trace_pomodoro(now, "start", None);
        for i in 0..self.agents.len() {
            let a = &self.agents[i];
            let record = TraceRecord {
                ts: now,
                actor: Actor::AgentId(a.id().clone()),
                event: json!({"type": "start"}),
                state_before: None,
                state_after: a.state().to_owned(),
                outputs: json!(a.outputs()),
            };
            self.effects.push(Effect::Trace(record));
            self.publish_state(i, now);
        }
        let zones: Vec<Label> = self.zones.keys().cloned().collect();
        for z in zones {
            self.settle(&z, now, "start");
        }
        mem::take(&mut self.effects)
    }

    /// Moves logical time forward, firing any pomodoro boundaries on the way.
    pub fn advance_to(&mut self, now: u64) -> Vec<Effect> {
        self.advance(now);
        mem::take(&mut self.effects)
    }

    fn advance(&mut self, now: u64) {
        if !self.started {
            self.start(now);
        }
        if now <= self.now {
            return;
        }
        let (state, changes) = pomodoro_tick(&self.cfg.pomodoro, self.pomodoro, now);
        for PhaseChange { at_ms, from, to } in changes {
            self.now = at_ms;
            self.pomodoro = to;
            self.trace_pomodoro(at_ms, "boundary", Some(from));
            self.settle_all(at_ms, "pomodoro");
        }
        self.pomodoro = state;
        self.now = now;
    }

    pub fn handle_event(&mut self, event: &ContextEvent) -> Vec<Effect> {
        self.event(event, None);
        mem::take(&mut self.effects)
    }

    /// Decodes and handles one fabric message.
    pub fn handle_message(&mut self, topic: &TopicName, payload: &[u8]) -> (Inbound, Vec<Effect>) {
        let inbound = match self.message(topic, payload) {
            Ok(i) => i,
            Err(e) => {
                self.dropped += 1;
                Inbound::Dropped(e)
            }
        };
        (inbound, mem::take(&mut self.effects))
    }

    fn message(&mut self, topic: &TopicName, payload: &[u8]) -> Result<Inbound, SchemaError> {
        let Ok(parsed) = XriTopic::parse(topic) else {
            return Ok(Inbound::Ignored);
        };
        match parsed {
            XriTopic::Clock => {
                let c = ClockPayload::decode(payload)?;
                self.advance(c.ts);
                Ok(if c.end { Inbound::End } else { Inbound::Handled })
            }
            XriTopic::Context { zone, source, kind } => {
                let e = decode_event(payload)?;
                if e.zone != zone || e.source != source || e.kind() != kind {
                    return Err(SchemaError::Topic(format!("{topic} does not match its payload")));
                }
                self.event(&e, None);
                Ok(Inbound::Handled)
            }
            XriTopic::AgentCmd { agent_id } => {
                let e = decode_event(payload)?;
                if e.kind() != EventKind::Command {
                    return Err(SchemaError::field("kind", "agent commands must be Command events"));
                }
                self.event(&e, Some(&agent_id));
                Ok(Inbound::Handled)
            }
            XriTopic::AgentState { .. } | XriTopic::Situation { .. } => Ok(Inbound::Ignored),
        }
    }

    fn event(&mut self, e: &ContextEvent, target: Option<&Label>) {
        self.advance(e.ts);
        let now = self.now;
        if let Some(zs) = self.zones.get_mut(&e.zone) {
            match e.value {
                EventValue::Presence(p) => zs.presence = Some(p),
                EventValue::Activity(a) => zs.activity = Some(a),
                _ => {}
            }
        }
        if let EventValue::Command { verb, .. } = &e.value {
            if verb == RESUME_VERB {
                if let Some(change) = pomodoro_resume(self.pomodoro, now) {
                    self.pomodoro = change.to;
                    self.trace_pomodoro(now, "resume", Some(change.from));
                    self.settle_all(now, "pomodoro");
                }
            }
        }
        let targets: Vec<usize> = (0..self.agents.len())
            .filter(|&i| {
                let a = &self.agents[i];
                match target {
                    Some(id) => a.id() == id,
                    None => a.spec().zone == e.zone,
                }
            })
            .collect();
        for i in targets {
            self.step_agent(i, e, now);
        }
        let cause = e.kind().name();
        let zones: Vec<Label> = match target {
            Some(id) => self
                .agents
                .iter()
                .filter(|a| a.id() == id)
                .map(|a| a.spec().zone.clone())
                .collect(),
            None => vec![e.zone.clone()],
        };
        for z in zones {
            if self.zones.contains_key(&z) {
                self.settle(&z, now, cause);
            }
        }
    }

    fn step_agent(&mut self, i: usize, e: &ContextEvent, now: u64) {
        if !self.agents[i].subscribes(e.kind()) {
            return;
        }
        let out = self.agents[i].step(e, now);
        let a = &self.agents[i];
        self.effects.push(Effect::Trace(TraceRecord {
            ts: now,
            actor: Actor::AgentId(a.id().clone()),
            event: e.to_json(),
            state_before: Some(out.state_before),
            state_after: out.state_after,
            outputs: json!(a.outputs()),
        }));
        if out.actions.iter().any(|x| matches!(x, Action::PublishState { .. })) {
            self.publish_state(i, now);
        }
    }

    fn publish_state(&mut self, i: usize, now: u64) {
        let a = &self.agents[i];
        let payload = AgentStatePayload {
            v: crate::event::PAYLOAD_VERSION,
            agent_id: a.id().clone(),
            state: a.state().to_owned(),
            outputs: a.outputs().clone(),
            profile: a.spec().profile.clone(),
            ts: now,
            seq: self.state_seq[i],
        };
        self.state_seq[i] += 1;
        self.effects.push(Effect::Publish {
            topic: XriTopic::AgentState {
                agent_id: a.id().clone(),
            }
            .to_topic(),
            payload: payload.encode(),
            retain: true,
        });
    }

    fn trace_pomodoro(&mut self, ts: u64, kind: &str, before: Option<PomodoroState>) {
        let p = self.pomodoro;
        self.effects.push(Effect::Trace(TraceRecord {
            ts,
            actor: Actor::Scenario("pomodoro".into()),
            event: json!({"type": kind}),
            state_before: before.map(|b| b.label().to_owned()),
            state_after: p.label().to_owned(),
            outputs: serde_json::to_value(self.pomodoro_view()).expect("view serializes"),
        }));
    }

    fn pomodoro_view(&self) -> PomodoroView {
        PomodoroView {
            phase: self.pomodoro.label().to_owned(),
            phase_started_ms: self.pomodoro.phase_started_ms(),
            phase_ends_ms: self.pomodoro.phase_ends_ms(&self.cfg.pomodoro),
        }
    }

    fn settle_all(&mut self, now: u64, cause: &str) {
        let zones: Vec<Label> = self.zones.keys().cloned().collect();
        for z in zones {
            self.settle(&z, now, cause);
        }
    }

    /// Reclassifies a zone, publishing on change, and tells the zone's
    /// agents about user-mode changes until nothing moves.
    fn settle(&mut self, zone: &Label, now: u64, cause: &str) {
        let mut cause = cause.to_owned();
        for _ in 0..SETTLE_LIMIT {
            let zs = &self.zones[zone];
            let obs = ZoneObservations {
                presence: zs.presence,
                activity: zs.activity,
                agent_states: self
                    .agents
                    .iter()
                    .filter(|a| a.spec().zone == *zone)
                    .map(|a| a.state().to_owned())
                    .collect(),
            };
            let set = classify_situation(zone, &obs, &self.pomodoro);
            let phase = self.pomodoro.label();
            let previous = zs.last.clone();
            if previous.as_ref() == Some(&(set.clone(), phase)) {
                return;
            }
            let view = self.pomodoro_view();
            let zs = self.zones.get_mut(zone).expect("zone exists");
            let payload = SituationPayload {
                v: crate::event::PAYLOAD_VERSION,
                zone: zone.clone(),
                user_mode: set.user_mode,
                plant_alerts: set.plant_alerts.iter().copied().collect(),
                pomodoro: view,
                ts: now,
                seq: zs.seq,
            };
            zs.seq += 1;
            zs.last = Some((set.clone(), phase));
            self.effects.push(Effect::Publish {
                topic: XriTopic::Situation { zone: zone.clone() }.to_topic(),
                payload: payload.encode(),
                retain: true,
            });
            self.effects.push(Effect::Trace(TraceRecord {
                ts: now,
                actor: Actor::Scenario(zone.to_string()),
                event: json!({"type": "classify", "cause": cause}),
                state_before: previous.as_ref().map(|(s, _)| s.to_string()),
                state_after: set.to_string(),
                outputs: json!({
                    "user_mode": set.user_mode,
                    "plant_alerts": payload.plant_alerts,
                    "pomodoro": phase,
                }),
            }));
            if previous.is_some_and(|(s, _)| s.user_mode == set.user_mode) {
                return;
            }
            let synth = ContextEvent {
                zone: zone.clone(),
                source: Label::new(SCENARIO_SOURCE).expect("static label"),
                value: EventValue::command(USER_MODE_VERB, [set.user_mode.name()]),
                ts: now,
                seq: self.synth_seq,
            };
            self.synth_seq += 1;
            let targets: Vec<usize> = (0..self.agents.len())
                .filter(|&i| self.agents[i].spec().zone == *zone)
                .collect();
            for i in targets {
                self.step_agent(i, &synth, now);
            }
            cause = USER_MODE_VERB.to_owned();
        }
    }
}

/// Runs the scenario over a pipeline's output without a broker.
pub fn simulate(cfg: ScenarioConfig, items: &[PipelineItem]) -> Result<Vec<Effect>, ConfigError> {
    let mut s = Scenario::new(cfg)?;
    let mut out = s.start(0);
    for item in items {
        match item {
            PipelineItem::Event(e) => out.extend(s.handle_event(e)),
            PipelineItem::Tick { ts, .. } => out.extend(s.advance_to(*ts)),
        }
    }
    Ok(out)
}

pub fn trace_lines(effects: &[Effect]) -> String {
    let mut s = String::new();
    for e in effects {
        if let Effect::Trace(t) = e {
            s.push_str(&t.to_line());
            s.push('\n');
        }
    }
    s
}
