//! Core of the XRI workstation platform: the MQTT wire codec and routing
//! tables, the context event schema and topic tree, the sensor pipeline,
//! agent controllers and the scenario engine.
//!
//! Everything in this crate is synchronous and deterministic. Networking
//! lives in `xri-fabric`, process orchestration in `xri-runtime`.

pub mod agent;
pub mod clock;
pub mod codec;
pub mod detect;
pub mod event;
pub mod frame;
pub mod pipeline;
pub mod pomodoro;
pub mod profile;
pub mod router;
pub mod scenario;
pub mod schema;
pub mod script;
pub mod situation;
pub mod topic;
pub mod workstation;

pub use codec::{decode_packet, encode_packet, Packet, ProtocolError, Publish, QoS};
pub use event::{ContextEvent, EventKind, EventValue, Label};
pub use topic::{topic_matches, TopicFilter, TopicName};
