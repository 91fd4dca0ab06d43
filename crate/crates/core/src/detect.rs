//! Pixel-statistic detectors, activity voting and debouncing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Activity, ContextEvent, EventKind, EventValue, Label};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Fraction of changed pixels above which presence is reported.
    pub presence_diff_threshold: f64,
    /// Minimum absolute per-pixel difference that counts as changed.
    pub pixel_delta_min: u8,
    pub light_on_threshold: f64,
    pub hysteresis_gap: f64,
    pub debounce_ms: u64,
    pub moisture_low_threshold: f64,
    /// Number of activity samples in the voting window.
    pub activity_window: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            presence_diff_threshold: 0.02,
            pixel_delta_min: 25,
            light_on_threshold: 80.0,
            hysteresis_gap: 10.0,
            debounce_ms: 500,
            moisture_low_threshold: 0.25,
            activity_window: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("frame size {got:?} does not match background {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid detector config: {0}")]
    Config(&'static str),
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.presence_diff_threshold) {
            return Err(DetectorError::Config("presence_diff_threshold must lie in [0, 1]"));
        }
        if !(0.0..=255.0).contains(&self.light_on_threshold) {
            return Err(DetectorError::Config("light_on_threshold must lie in [0, 255]"));
        }
        if !(self.hysteresis_gap >= 0.0) {
            return Err(DetectorError::Config("hysteresis_gap must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.moisture_low_threshold) {
            return Err(DetectorError::Config("moisture_low_threshold must lie in [0, 1]"));
        }
        if self.activity_window == 0 {
            return Err(DetectorError::Config("activity_window must be >= 1"));
        }
        Ok(())
    }
}

/// Frame differencing against a background frame. Presence is reported when
/// the fraction of pixels differing by at least `pixel_delta_min` strictly
/// exceeds `presence_diff_threshold`.
pub fn detect_presence(background: &Frame, current: &Frame, cfg: &DetectorConfig) -> Result<bool, DetectorError> {
    if !background.same_dimensions(current) {
        return Err(DetectorError::DimensionMismatch {
            expected: (background.width(), background.height()),
            got: (current.width(), current.height()),
        });
    }
    let changed = background
        .pixels()
        .iter()
        .zip(current.pixels())
        .filter(|(b, c)| b.abs_diff(**c) >= cfg.pixel_delta_min)
        .count();
    Ok(changed as f64 / current.len() as f64 > cfg.presence_diff_threshold)
}

/// Mean-luminance light detector with hysteresis: switches on at
/// `mean >= threshold`, off only below `threshold - gap`, holds otherwise.
pub fn detect_light(current: &Frame, previous: bool, cfg: &DetectorConfig) -> bool {
    light_with_hysteresis(current.mean_luminance(), previous, cfg)
}

pub fn light_with_hysteresis(mean: f64, previous: bool, cfg: &DetectorConfig) -> bool {
    if mean >= cfg.light_on_threshold {
        true
    } else if mean < cfg.light_on_threshold - cfg.hysteresis_gap {
        false
    } else {
        previous
    }
}

/// Majority vote over `window`. A tie for the top count, or an empty window,
/// keeps `previous`. Without presence the user is `Away`.
pub fn classify_activity(window: &[Activity], previous: Activity, presence: bool) -> Activity {
    if !presence {
        return Activity::Away;
    }
    let mut counts: BTreeMap<Activity, usize> = BTreeMap::new();
    for a in window {
        *counts.entry(*a).or_default() += 1;
    }
    let Some(&best) = counts.values().max() else {
        return previous;
    };
    let mut leaders = counts.iter().filter(|(_, &c)| c == best);
    match (leaders.next(), leaders.next()) {
        (Some((&a, _)), None) => a,
        _ => previous,
    }
}

/// Per-stream debouncer.
///
/// The first observation is emitted immediately. After that a change is held
/// as pending and is emitted once it has lasted `debounce_ms` without being
/// replaced; the emission is stamped with the confirmation time. A change
/// that reverts to the last emitted key inside the window is dropped.
#[derive(Debug, Clone)]
pub struct Debouncer<K, V> {
    debounce_ms: u64,
    stable: Option<K>,
    pending: Option<Pending<K, V>>,
}

#[derive(Debug, Clone)]
struct Pending<K, V> {
    key: K,
    value: V,
    since: u64,
}

impl<K: PartialEq + Clone, V> Debouncer<K, V> {
    pub fn new(debounce_ms: u64) -> Self {
        Self {
            debounce_ms,
            stable: None,
            pending: None,
        }
    }

    pub fn stable(&self) -> Option<&K> {
        self.stable.as_ref()
    }

    /// Feeds one sample. Returns `Some((ts, value))` when it is emitted
    /// right away, which only happens for the first sample or with a zero window.
    pub fn observe(&mut self, ts: u64, key: K, value: V) -> Option<(u64, V)> {
        match &self.stable {
            None => {
                self.stable = Some(key);
                return Some((ts, value));
            }
            Some(s) if *s == key => {
                self.pending = None;
                return None;
            }
            Some(_) => {}
        }
        match &mut self.pending {
            Some(p) if p.key == key => p.value = value,
            _ => {
                self.pending = Some(Pending {
                    key,
                    value,
                    since: ts,
                })
            }
        }
        if self.debounce_ms == 0 {
            return self.poll(ts);
        }
        None
    }

    /// When the pending change will be confirmed, if there is one.
    pub fn deadline(&self) -> Option<u64> {
        self.pending.as_ref().map(|p| p.since + self.debounce_ms)
    }

    /// Confirms the pending change if its window has elapsed by `now`.
    pub fn poll(&mut self, now: u64) -> Option<(u64, V)> {
        let deadline = self.deadline()?;
        if now < deadline {
            return None;
        }
        let p = self.pending.take()?;
        self.stable = Some(p.key);
        Some((deadline, p.value))
    }
}

/// Key an event value is debounced on: the boolean state for presence and
/// light, the label for activity, the low/ok band for moisture.
#[derive(Debug, Clone, PartialEq)]
pub enum DebounceKey {
    Flag(bool),
    Activity(Activity),
    Text(String),
}

pub fn debounce_key(value: &EventValue, cfg: &DetectorConfig) -> DebounceKey {
    match value {
        EventValue::Presence(b) => DebounceKey::Flag(*b),
        EventValue::LightLevel { on, .. } => DebounceKey::Flag(*on),
        EventValue::Activity(a) => DebounceKey::Activity(*a),
        EventValue::Moisture(m) => DebounceKey::Flag(*m < cfg.moisture_low_threshold),
        EventValue::Command { verb, args } => DebounceKey::Text(format!("{verb} {}", args.join(" "))),
    }
}

/// Debounces an event stream ordered by timestamp, per (source, kind).
/// Command events pass through untouched. Output is in emission order and
/// pending changes still open at the end of the stream are confirmed.
pub fn debounce(events: &[ContextEvent], cfg: &DetectorConfig) -> Vec<ContextEvent> {
    type Stream = Debouncer<DebounceKey, ContextEvent>;
    let mut streams: Vec<((Label, EventKind), Stream)> = Vec::new();
    let mut out = Vec::new();

    fn flush_until(streams: &mut [((Label, EventKind), Stream)], now: u64, out: &mut Vec<ContextEvent>) {
        loop {
            let next = streams
                .iter()
                .enumerate()
                .filter_map(|(i, (_, d))| d.deadline().map(|t| (t, i)))
                .filter(|(t, _)| *t <= now)
                .min();
            let Some((t, i)) = next else { return };
            if let Some((ts, mut e)) = streams[i].1.poll(t) {
                e.ts = ts;
                out.push(e);
            }
        }
    }

    for e in events {
        flush_until(&mut streams, e.ts, &mut out);
        if e.kind() == EventKind::Command {
            out.push(e.clone());
            continue;
        }
        let id = (e.source.clone(), e.kind());
        let idx = match streams.iter().position(|(k, _)| *k == id) {
            Some(i) => i,
            None => {
                streams.push((id, Debouncer::new(cfg.debounce_ms)));
                streams.len() - 1
            }
        };
        if let Some((_, emitted)) = streams[idx].1.observe(e.ts, debounce_key(&e.value, cfg), e.clone()) {
            out.push(emitted);
        }
    }
    flush_until(&mut streams, u64::MAX, &mut out);
    out
}
