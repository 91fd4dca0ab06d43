//! Networking for the XRI runtime: a broker and client for the MQTT 3.1.1
//! subset implemented in `xri_core::codec`, plus test tooling.

pub mod bench;
pub mod broker;
pub mod client;
pub mod fault;
pub mod framing;

pub use broker::{serve, BrokerConfig, BrokerHandle, Metrics};
pub use client::{Client, ClientError, ClientOptions, Message, PollError};
