//! Retained-state cache and fan-out.
//!
//! Cache updates and broadcasts happen under one lock, as does joining, so a
//! new client's snapshot and its first live frame never straddle an update.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::Value;
use tokio::sync::broadcast;
use xri_core::schema::XriTopic;
use xri_fabric::Message;

use crate::frame::{payload_value, BrokerStatus, Downstream, SnapshotEntry};

pub(crate) type Frame = Arc<str>;

struct State {
    retained: BTreeMap<String, Value>,
    tx: broadcast::Sender<Frame>,
    broker: BrokerStatus,
}

#[derive(Clone)]
pub(crate) struct Hub {
    state: Arc<Mutex<State>>,
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Hub {
    pub(crate) fn new(capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(capacity);
        Self {
            state: Arc::new(Mutex::new(State {
                retained: BTreeMap::new(),
                tx,
                broker: BrokerStatus::Up,
            })),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().expect("hub lock")
    }

    /// Snapshot, current broker status and a receiver for everything after.
    pub(crate) fn join(&self) -> (Downstream, BrokerStatus, broadcast::Receiver<Frame>) {
        let s = self.lock();
        let states = s
            .retained
            .iter()
            .map(|(topic, payload)| SnapshotEntry {
                topic: topic.clone(),
                payload: payload.clone(),
            })
            .collect();
        (Downstream::Snapshot { states }, s.broker, s.tx.subscribe())
    }

    pub(crate) fn message(&self, m: &Message) {
        let topic = m.topic.as_str().to_owned();
        let payload = payload_value(&m.payload);
        let stateful = m.retain || XriTopic::parse(&m.topic).is_ok_and(|t| t.is_retained());
        let frame = Downstream::Event {
            topic: topic.clone(),
            payload: payload.clone(),
            ts: unix_ms(),
        }
        .to_text();
        let mut s = self.lock();
        if stateful {
            if m.payload.is_empty() {
                s.retained.remove(&topic);
            } else {
                s.retained.insert(topic, payload);
            }
        }
        let _ = s.tx.send(frame.into());
    }

    pub(crate) fn status(&self, broker: BrokerStatus) {
        let mut s = self.lock();
        s.broker = broker;
        let _ = s.tx.send(Downstream::Status { broker }.to_text().into());
    }

    pub(crate) fn clients(&self) -> usize {
        self.lock().tx.receiver_count()
    }
}
