//! Subscription registry, retained store and publish routing.
//!
//! This is the broker's routing brain without any I/O: the network layer
//! holds a [`Router`] behind a single lock and turns the returned
//! [`Delivery`] list into packets.

use std::collections::BTreeMap;

use crate::codec::{Publish, QoS};
use crate::topic::{TopicFilter, TopicName};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetainedMessage {
    pub topic: TopicName,
    pub payload: Vec<u8>,
    pub qos: QoS,
}

/// Last retained message per exact topic.
#[derive(Debug, Clone, Default)]
pub struct RetainedStore {
    entries: BTreeMap<TopicName, RetainedMessage>,
}

impl RetainedStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies a retain-flagged publish. An empty payload deletes the entry.
    pub fn apply(&mut self, publish: &Publish) {
        if !publish.retain {
            return;
        }
        if publish.payload.is_empty() {
            self.entries.remove(&publish.topic);
        } else {
            self.entries.insert(
                publish.topic.clone(),
                RetainedMessage {
                    topic: publish.topic.clone(),
                    payload: publish.payload.clone(),
                    qos: publish.qos,
                },
            );
        }
    }

    pub fn get(&self, topic: &TopicName) -> Option<&RetainedMessage> {
        self.entries.get(topic)
    }

    pub fn matching<'a>(&'a self, filter: &'a TopicFilter) -> impl Iterator<Item = &'a RetainedMessage> + 'a {
        self.entries.values().filter(move |m| filter.matches(&m.topic))
    }

    pub fn iter(&self) -> impl Iterator<Item = &RetainedMessage> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-session subscriptions keyed by any ordered session key.
#[derive(Debug, Clone)]
pub struct SubscriptionTable<K> {
    sessions: BTreeMap<K, Vec<(TopicFilter, QoS)>>,
}

impl<K> Default for SubscriptionTable<K> {
    fn default() -> Self {
        Self {
            sessions: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone> SubscriptionTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the subscription for `filter`. Returns the granted QoS.
    pub fn subscribe(&mut self, session: K, filter: TopicFilter, qos: QoS) -> QoS {
        let subs = self.sessions.entry(session).or_default();
        match subs.iter_mut().find(|(f, _)| *f == filter) {
            Some(entry) => entry.1 = qos,
            None => subs.push((filter, qos)),
        }
        qos
    }

    pub fn unsubscribe(&mut self, session: &K, filter: &TopicFilter) -> bool {
        let Some(subs) = self.sessions.get_mut(session) else {
            return false;
        };
        let before = subs.len();
        subs.retain(|(f, _)| f != filter);
        let removed = subs.len() != before;
        if subs.is_empty() {
            self.sessions.remove(session);
        }
        removed
    }

    pub fn remove_session(&mut self, session: &K) {
        self.sessions.remove(session);
    }

    pub fn subscriptions(&self, session: &K) -> &[(TopicFilter, QoS)] {
        self.sessions.get(session).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sessions with at least one filter matching `topic`, each once, at the
    /// highest QoS granted among its matching filters.
    pub fn matches(&self, topic: &TopicName) -> Vec<(K, QoS)> {
        self.sessions
            .iter()
            .filter_map(|(key, subs)| {
                subs.iter()
                    .filter(|(f, _)| f.matches(topic))
                    .map(|(_, q)| *q)
                    .max()
                    .map(|q| (key.clone(), q))
            })
            .collect()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery<K> {
    pub session: K,
    pub qos: QoS,
}

#[derive(Debug, Clone)]
pub struct Router<K> {
    pub subscriptions: SubscriptionTable<K>,
    pub retained: RetainedStore,
}

impl<K> Default for Router<K> {
    fn default() -> Self {
        Self {
            subscriptions: SubscriptionTable::default(),
            retained: RetainedStore::default(),
        }
    }
}

impl<K: Ord + Clone> Router<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Routes an inbound publish: one delivery per matching session at
    /// `min(publish qos, granted qos)`, and retained-store update when the
    /// retain flag is set.
    pub fn route_publish(&mut self, publish: &Publish) -> Vec<Delivery<K>> {
        self.retained.apply(publish);
        self.subscriptions
            .matches(&publish.topic)
            .into_iter()
            .map(|(session, granted)| Delivery {
                session,
                qos: granted.min(publish.qos),
            })
            .collect()
    }

    /// Retained messages to hand a session that just subscribed to `filters`,
    /// one per topic at `min(retained qos, best granted qos)`.
    pub fn retained_for(&self, filters: &[(TopicFilter, QoS)]) -> Vec<(RetainedMessage, QoS)> {
        self.retained
            .iter()
            .filter_map(|m| {
                filters
                    .iter()
                    .filter(|(f, _)| f.matches(&m.topic))
                    .map(|(_, q)| *q)
                    .max()
                    .map(|q| (m.clone(), q.min(m.qos)))
            })
            .collect()
    }
}
