//! WebSocket gateway for browser dashboards.
//!
//! Clients connect to `ws://host:port/xri` and receive a snapshot of every
//! retained state topic followed by the live stream of `xri/#`. Upstream
//! publishes are checked against a topic allowlist and the payload schema,
//! then forwarded at QoS 1.

pub mod frame;
mod hub;
mod server;

use xri_core::topic::{TopicFilter, TopicName};

pub use frame::{payload_value, BrokerStatus, Downstream, ErrorCode, SnapshotEntry, Upstream};
pub use server::{serve, BridgeConfig, BridgeError, BridgeHandle, WS_PATH};

/// Topics browser clients may publish to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allowlist(Vec<TopicFilter>);

impl Allowlist {
    pub fn new(filters: Vec<TopicFilter>) -> Self {
        Self(filters)
    }

    pub fn permits(&self, topic: &TopicName) -> bool {
        self.0.iter().any(|f| f.matches(topic))
    }

    pub fn filters(&self) -> &[TopicFilter] {
        &self.0
    }
}

impl Default for Allowlist {
    fn default() -> Self {
        Self(
            ["xri/context/#", "xri/agent/+/cmd", "xri/scenario/#"]
                .into_iter()
                .map(|f| TopicFilter::new(f).expect("static filter"))
                .collect(),
        )
    }
}
