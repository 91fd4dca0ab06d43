//! Context-intelligence pipeline: turns a sensor script into the ordered
//! sequence of debounced context events and clock ticks it publishes.
//!
//! The pipeline is a pure function of (script, frames, config, seed). The
//! network runner only paces and publishes what this module produces.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detect::{
    classify_activity, debounce_key, detect_light, detect_presence, light_with_hysteresis, DebounceKey, Debouncer,
    DetectorConfig, DetectorError,
};
use crate::event::{Activity, ContextEvent, EventKind, EventValue, Label};
use crate::frame::Frame;
use crate::script::{EntryInput, EntryKind, ScriptEntry, SensorScript};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub default_zone: Label,
    /// Zone per source; script entries may override it.
    pub zones: BTreeMap<Label, Label>,
    /// Logical interval between clock ticks; zero emits only the final tick.
    pub tick_ms: u64,
    /// Overrides the script's noise seed.
    pub seed: Option<u64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            default_zone: Label::new("desk1").expect("static label"),
            zones: BTreeMap::new(),
            tick_ms: 1000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineItem {
    Event(ContextEvent),
    Tick { ts: u64, end: bool },
}

impl PipelineItem {
    pub fn ts(&self) -> u64 {
        match self {
            PipelineItem::Event(e) => e.ts,
            PipelineItem::Tick { ts, .. } => *ts,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("line {line}: presence frame for {source_id} has no preceding background frame")]
    MissingBackground { line: usize, source_id: Label },
    #[error("line {line}: frame {path:?} was not loaded")]
    MissingFrame { line: usize, path: String },
    #[error("line {line}: {error}")]
    Detector { line: usize, error: DetectorError },
    #[error(transparent)]
    Config(#[from] DetectorError),
}

struct Stream {
    source: Label,
    zone: Label,
    kind: EventKind,
    debouncer: Debouncer<DebounceKey, EventValue>,
}

fn default_value(kind: EventKind) -> EventValue {
    match kind {
        EventKind::Presence => EventValue::Presence(false),
        EventKind::LightLevel => EventValue::LightLevel {
            on: false,
            mean_luminance: 0.0,
        },
        EventKind::Activity => EventValue::Activity(Activity::Away),
        EventKind::Moisture => EventValue::Moisture(1.0),
        EventKind::Command => unreachable!("commands are not streamed"),
    }
}

fn stream_kind(kind: EntryKind) -> Option<EventKind> {
    match kind {
        EntryKind::Presence => Some(EventKind::Presence),
        EntryKind::Light => Some(EventKind::LightLevel),
        EntryKind::Activity => Some(EventKind::Activity),
        EntryKind::Moisture => Some(EventKind::Moisture),
        EntryKind::Background | EntryKind::Command => None,
    }
}

struct Runner<'a> {
    cfg: &'a DetectorConfig,
    opts: &'a PipelineOptions,
    frames: &'a BTreeMap<String, Frame>,
    noise: u8,
    rng: ChaCha8Rng,
    streams: Vec<Stream>,
    seq: BTreeMap<Label, u64>,
    backgrounds: BTreeMap<Label, Frame>,
    light_raw: BTreeMap<Label, bool>,
    activity_window: BTreeMap<Label, Vec<Activity>>,
    activity_class: BTreeMap<Label, Activity>,
    zone_presence: BTreeMap<Label, bool>,
    next_tick: Option<u64>,
    out: Vec<PipelineItem>,
}

impl Runner<'_> {
    fn zone_of(&self, entry: &ScriptEntry) -> Label {
        entry
            .zone
            .clone()
            .or_else(|| self.opts.zones.get(&entry.source).cloned())
            .unwrap_or_else(|| self.opts.default_zone.clone())
    }

    fn emit(&mut self, ts: u64, zone: Label, source: Label, value: EventValue) {
        if let EventValue::Presence(p) = value {
            self.zone_presence.insert(zone.clone(), p);
        }
        let seq = self.seq.entry(source.clone()).or_insert(0);
        let event = ContextEvent {
            zone,
            source,
            value,
            ts,
            seq: *seq,
        };
        *seq += 1;
        self.out.push(PipelineItem::Event(event));
    }

    /// Emits every confirmation and tick due at or before `now`, in time order.
    fn advance(&mut self, now: u64) {
        loop {
            let deadline = self
                .streams
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.debouncer.deadline().map(|d| (d, i)))
                .filter(|(d, _)| *d <= now)
                .min();
            let tick = self.next_tick.filter(|t| *t <= now);
            match (deadline, tick) {
                (Some((d, i)), t) if t.is_none_or(|t| d <= t) => {
                    let s = &mut self.streams[i];
                    if let Some((ts, value)) = s.debouncer.poll(d) {
                        let (zone, source) = (s.zone.clone(), s.source.clone());
                        self.emit(ts, zone, source, value);
                    }
                }
                (_, Some(t)) => {
                    self.out.push(PipelineItem::Tick { ts: t, end: false });
                    self.next_tick = Some(t + self.opts.tick_ms);
                }
                _ => return,
            }
        }
    }

    fn stream_index(&self, source: &Label, kind: EventKind) -> usize {
        self.streams
            .iter()
            .position(|s| s.source == *source && s.kind == kind)
            .expect("streams are created in the prescan")
    }

    fn feed(&mut self, ts: u64, source: &Label, value: EventValue) {
        let i = self.stream_index(source, value.kind());
        let key = debounce_key(&value, self.cfg);
        let s = &mut self.streams[i];
        if let Some((ts, value)) = s.debouncer.observe(ts, key, value) {
            let (zone, source) = (s.zone.clone(), s.source.clone());
            self.emit(ts, zone, source, value);
        }
    }

    fn frame(&mut self, entry: &ScriptEntry, path: &str) -> Result<Frame, PipelineError> {
        let mut frame = self
            .frames
            .get(path)
            .cloned()
            .ok_or_else(|| PipelineError::MissingFrame {
                line: entry.line,
                path: path.to_owned(),
            })?;
        if self.noise > 0 {
            let a = self.noise as i16;
            for p in frame.pixels_mut() {
                let n: i16 = self.rng.random_range(-a..=a);
                *p = (*p as i16 + n).clamp(0, 255) as u8;
            }
        }
        Ok(frame)
    }

    fn process(&mut self, entry: &ScriptEntry) -> Result<(), PipelineError> {
        let ts = entry.ts;
        let source = &entry.source;
        match (&entry.kind, &entry.input) {
            (EntryKind::Background, EntryInput::Frame(path)) => {
                let f = self.frame(entry, path)?;
                self.backgrounds.insert(source.clone(), f);
            }
            (EntryKind::Presence, EntryInput::Frame(path)) => {
                let f = self.frame(entry, path)?;
                let bg = self
                    .backgrounds
                    .get(source)
                    .ok_or_else(|| PipelineError::MissingBackground {
                        line: entry.line,
                        source_id: source.clone(),
                    })?;
                let present = detect_presence(bg, &f, self.cfg).map_err(|error| PipelineError::Detector {
                    line: entry.line,
                    error,
                })?;
                self.feed(ts, source, EventValue::Presence(present));
            }
            (EntryKind::Presence, EntryInput::Presence(p)) => self.feed(ts, source, EventValue::Presence(*p)),
            (EntryKind::Light, input) => {
                let previous = self.light_raw.get(source).copied().unwrap_or(false);
                let (on, mean) = match input {
                    EntryInput::Frame(path) => {
                        let f = self.frame(entry, path)?;
                        (detect_light(&f, previous, self.cfg), f.mean_luminance())
                    }
                    EntryInput::LightMean(m) => (light_with_hysteresis(*m, previous, self.cfg), *m),
                    EntryInput::LightOn(on) => (*on, if *on { 255.0 } else { 0.0 }),
                    _ => unreachable!("script parser pairs light entries with light inputs"),
                };
                self.light_raw.insert(source.clone(), on);
                self.feed(
                    ts,
                    source,
                    EventValue::LightLevel {
                        on,
                        mean_luminance: mean,
                    },
                );
            }
            (EntryKind::Activity, EntryInput::Activity(a)) => {
                let window = self.activity_window.entry(source.clone()).or_default();
                window.push(*a);
                if window.len() > self.cfg.activity_window {
                    window.remove(0);
                }
                let zone = self.zone_of(entry);
                // Zones without a presence sensor are treated as occupied.
                let present = self.zone_presence.get(&zone).copied().unwrap_or_else(|| {
                    !self
                        .streams
                        .iter()
                        .any(|s| s.kind == EventKind::Presence && s.zone == zone)
                });
                let previous = self.activity_class.get(source).copied().unwrap_or(Activity::Away);
                let class = classify_activity(&self.activity_window[source], previous, present);
                self.activity_class.insert(source.clone(), class);
                self.feed(ts, source, EventValue::Activity(class));
            }
            (EntryKind::Moisture, EntryInput::Moisture(m)) => self.feed(ts, source, EventValue::Moisture(*m)),
            (EntryKind::Command, EntryInput::Command { verb, args }) => {
                let zone = self.zone_of(entry);
                self.emit(
                    ts,
                    zone,
                    source.clone(),
                    EventValue::Command {
                        verb: verb.clone(),
                        args: args.clone(),
                    },
                );
            }
            _ => unreachable!("script parser validates kind/input pairs"),
        }
        Ok(())
    }
}

/// Replays `script` on the logical clock and returns everything the
/// pipeline would publish, in order.
///
/// Streams whose first sample comes after the script's first timestamp are
/// seeded at that timestamp with a default value (no presence, light off,
/// Away, moisture 1.0); an empty script produces nothing. The last item is always a tick
/// with `end: true`.
pub fn run_offline(
    script: &SensorScript,
    frames: &BTreeMap<String, Frame>,
    cfg: &DetectorConfig,
    opts: &PipelineOptions,
) -> Result<Vec<PipelineItem>, PipelineError> {
    cfg.validate()?;
    let Some(first) = script.entries.first() else {
        return Ok(Vec::new());
    };
    let t0 = first.ts;
    let mut runner = Runner {
        cfg,
        opts,
        frames,
        noise: script.frame_noise,
        rng: ChaCha8Rng::seed_from_u64(opts.seed.or(script.seed).unwrap_or(0)),
        streams: Vec::new(),
        seq: BTreeMap::new(),
        backgrounds: BTreeMap::new(),
        light_raw: BTreeMap::new(),
        activity_window: BTreeMap::new(),
        activity_class: BTreeMap::new(),
        zone_presence: BTreeMap::new(),
        next_tick: (opts.tick_ms > 0).then_some(t0 + opts.tick_ms),
        out: Vec::new(),
    };
    for entry in &script.entries {
        let Some(kind) = stream_kind(entry.kind) else { continue };
        if runner.streams.iter().any(|s| s.source == entry.source && s.kind == kind) {
            continue;
        }
        let zone = runner.zone_of(entry);
        runner.streams.push(Stream {
            source: entry.source.clone(),
            zone,
            kind,
            debouncer: Debouncer::new(cfg.debounce_ms),
        });
    }
    for i in 0..runner.streams.len() {
        let (source, kind) = (runner.streams[i].source.clone(), runner.streams[i].kind);
        let sampled_at_start = script
            .entries
            .iter()
            .take_while(|e| e.ts == t0)
            .any(|e| e.source == source && stream_kind(e.kind) == Some(kind));
        if !sampled_at_start {
            runner.feed(t0, &source, default_value(kind));
        }
    }
    for entry in &script.entries {
        runner.advance(entry.ts);
        runner.process(entry)?;
    }
    let last = script.entries.last().map_or(t0, |e| e.ts);
    let end = runner
        .streams
        .iter()
        .filter_map(|s| s.debouncer.deadline())
        .max()
        .map_or(last, |d| d.max(last));
    // Regular ticks stop short of the final one.
    runner.advance(end);
    runner
        .out
        .retain(|i| !matches!(i, PipelineItem::Tick { ts, end: false } if *ts == end));
    runner.out.push(PipelineItem::Tick { ts: end, end: true });
    Ok(runner.out)
}
