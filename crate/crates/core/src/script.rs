//! Sensor scripts: JSON Lines of timestamped sensor inputs.
//!
//! ```text
//! # comment lines start with '#'
//! {"seed": 7, "frame_noise": 3}
//! {"ts": 0, "source": "cam0", "kind": "background", "ref": "frames/empty.pgm"}
//! {"ts": 1000, "source": "cam0", "kind": "presence", "ref": "frames/person.pgm"}
//! {"ts": 1000, "source": "laptop", "kind": "activity", "value": "Working"}
//! {"ts": 2000, "source": "soil", "kind": "moisture", "value": 0.8, "zone": "desk1"}
//! ```
//!
//! An optional header line (no `ts`) sets the noise seed and the amplitude of
//! uniform per-pixel noise added to every frame.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::event::{Activity, Label};
use crate::frame::{Frame, FrameError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    /// Reference frame for presence differencing.
    Background,
    Presence,
    Light,
    Activity,
    Moisture,
    Command,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryInput {
    Frame(String),
    Presence(bool),
    /// Scripted switch state, bypassing the detector.
    LightOn(bool),
    /// Scripted mean luminance, fed through the hysteresis detector.
    LightMean(f64),
    Activity(Activity),
    Moisture(f64),
    Command { verb: String, args: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub line: usize,
    pub ts: u64,
    pub source: Label,
    pub zone: Option<Label>,
    pub kind: EntryKind,
    pub input: EntryInput,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorScript {
    pub seed: Option<u64>,
    pub frame_noise: u8,
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("frame {path}: {source}")]
    Frame {
        path: String,
        #[source]
        source: FrameError,
    },
    #[error("frame {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn line_err(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    ts: u64,
    source: String,
    kind: EntryKind,
    #[serde(default)]
    zone: Option<String>,
    #[serde(default, rename = "ref")]
    frame_ref: Option<String>,
    #[serde(default)]
    value: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    frame_noise: u8,
}

impl SensorScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut script = SensorScript::default();
        let mut last_ts = 0;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let v: Value = serde_json::from_str(trimmed).map_err(|e| line_err(line, e.to_string()))?;
            if v.get("ts").is_none() {
                if !script.entries.is_empty() || script.seed.is_some() {
                    return Err(line_err(line, "header line must come before entries"));
                }
                let h: RawHeader = serde_json::from_value(v).map_err(|e| line_err(line, e.to_string()))?;
                script.seed = h.seed;
                script.frame_noise = h.frame_noise;
                continue;
            }
            let raw: RawEntry = serde_json::from_value(v).map_err(|e| line_err(line, e.to_string()))?;
            if raw.ts < last_ts {
                return Err(line_err(line, format!("timestamp {} goes backwards (previous {last_ts})", raw.ts)));
            }
            last_ts = raw.ts;
            let source = Label::new(raw.source).map_err(|e| line_err(line, e.to_string()))?;
            let zone = raw
                .zone
                .map(Label::new)
                .transpose()
                .map_err(|e| line_err(line, e.to_string()))?;
            let input = parse_input(raw.kind, raw.frame_ref, raw.value).map_err(|m| line_err(line, m))?;
            script.entries.push(ScriptEntry {
                line,
                ts: raw.ts,
                source,
                zone,
                kind: raw.kind,
                input,
            });
        }
        Ok(script)
    }

    pub fn frame_refs(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| match &e.input {
            EntryInput::Frame(p) => Some(p.as_str()),
            _ => None,
        })
    }

    /// Reads every referenced frame relative to `base_dir`.
    pub fn load_frames(&self, base_dir: &Path) -> Result<BTreeMap<String, Frame>, ScriptError> {
        let mut frames = BTreeMap::new();
        for r in self.frame_refs() {
            if frames.contains_key(r) {
                continue;
            }
            let path = base_dir.join(r);
            let bytes = std::fs::read(&path).map_err(|source| ScriptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let frame = Frame::from_pgm(&bytes).map_err(|source| ScriptError::Frame {
                path: path.display().to_string(),
                source,
            })?;
            frames.insert(r.to_owned(), frame);
        }
        Ok(frames)
    }
}

fn parse_input(kind: EntryKind, frame_ref: Option<String>, value: Option<Value>) -> Result<EntryInput, String> {
    match (frame_ref, value) {
        (Some(_), Some(_)) => Err("give either `ref` or `value`, not both".into()),
        (Some(r), None) => match kind {
            EntryKind::Background | EntryKind::Presence | EntryKind::Light => Ok(EntryInput::Frame(r)),
            _ => Err(format!("{kind:?} entries take a `value`, not a frame `ref`")),
        },
        (None, None) => Err("missing `ref` or `value`".into()),
        (None, Some(v)) => match kind {
            EntryKind::Background => Err("background entries need a frame `ref`".into()),
            EntryKind::Presence => v.as_bool().map(EntryInput::Presence).ok_or("presence value must be a boolean".into()),
            EntryKind::Light => match &v {
                Value::Bool(on) => Ok(EntryInput::LightOn(*on)),
                Value::Number(n) => {
                    let mean = n.as_f64().unwrap_or(-1.0);
                    if !(0.0..=255.0).contains(&mean) {
                        return Err("light luminance must lie in [0, 255]".into());
                    }
                    Ok(EntryInput::LightMean(mean))
                }
                _ => Err("light value must be a boolean or a mean luminance".into()),
            },
            EntryKind::Activity => v
                .as_str()
                .and_then(Activity::from_name)
                .map(EntryInput::Activity)
                .ok_or("activity value must be one of Sitting, Standing, Working, Away".into()),
            EntryKind::Moisture => match v.as_f64() {
                Some(m) if (0.0..=1.0).contains(&m) => Ok(EntryInput::Moisture(m)),
                _ => Err("moisture value must be a number in [0, 1]".into()),
            },
            EntryKind::Command => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Cmd {
                    verb: String,
                    #[serde(default)]
                    args: Vec<String>,
                }
                let c: Cmd = match v {
                    Value::String(verb) => Cmd { verb, args: Vec::new() },
                    other => serde_json::from_value(other).map_err(|e| e.to_string())?,
                };
                if c.verb.is_empty() {
                    return Err("command verb must be non-empty".into());
                }
                Ok(EntryInput::Command { verb: c.verb, args: c.args })
            }
        },
    }
}
