//! Runs the workstation scenario and the sensor pipeline as fabric clients.
//!
//! The scenario host subscribes to context, command and clock topics and
//! republishes agent states and situations as retained messages. The sensor
//! publisher replays pipeline output paced by a [`LogicalClock`]. With a
//! scripted clock the host's trace is identical to
//! [`xri_core::scenario::simulate`] over the same items.

mod host;
mod publisher;

use std::net::SocketAddr;
use std::time::Duration;

use thiserror::Error;
use xri_core::clock::LogicalClock;
use xri_core::pipeline::PipelineItem;
use xri_core::scenario::{ConfigError, Scenario, ScenarioConfig};
use xri_fabric::{Client, ClientError, ClientOptions};

pub use host::{HostClock, HostOptions, HostReport, ScenarioHost};
pub use publisher::{publish_items, publish_reliably, PublishOptions, PublishStats};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("scenario config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("no fabric traffic for {0:?}")]
    Idle(Duration),
    #[error("writing trace: {0}")]
    Trace(std::io::Error),
    #[error("scenario task failed: {0}")]
    Join(String),
}

impl RuntimeError {
    /// Whether the failure lies with the broker connection rather than with
    /// the inputs.
    pub fn is_connectivity(&self) -> bool {
        matches!(self, RuntimeError::Client(_) | RuntimeError::Idle(_))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Logical ms per wall ms; `0.0` replays as fast as the broker allows.
    pub speed: f64,
    /// Client ids are `{prefix}-scenario` and `{prefix}-sensors`.
    pub client_prefix: String,
    pub publish: PublishOptions,
    pub idle_timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            speed: 0.0,
            client_prefix: "xri".into(),
            publish: PublishOptions::default(),
            idle_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub host: HostReport,
    pub sensors: PublishStats,
}

/// Hosts the scenario, replays `items` into it over the broker at `addr`
/// and returns once the final clock tick has been handled.
pub async fn run_scripted(
    addr: SocketAddr,
    cfg: ScenarioConfig,
    items: &[PipelineItem],
    opts: &RunOptions,
) -> Result<RunReport, RuntimeError> {
    let scenario = Scenario::new(cfg)?;
    let host_opts = HostOptions {
        clock: HostClock::Scripted,
        idle_timeout: Some(opts.idle_timeout),
        publish: opts.publish.clone(),
    };
    let host = ScenarioHost::connect(addr, format!("{}-scenario", opts.client_prefix), scenario, host_opts).await?;
    let host = tokio::spawn(host.run());
    let sensors = Client::connect(addr, ClientOptions::new(format!("{}-sensors", opts.client_prefix))).await?;
    // Without items the host still needs the final tick to stop.
    let end_only = [PipelineItem::Tick { ts: 0, end: true }];
    let items = if items.is_empty() { &end_only[..] } else { items };
    let stats = publish_items(&sensors, items, &LogicalClock::scripted(opts.speed), &opts.publish).await;
    sensors.disconnect().await;
    let stats = match stats {
        Ok(s) => s,
        Err(e) => {
            host.abort();
            return Err(e.into());
        }
    };
    let host = host.await.map_err(|e| RuntimeError::Join(e.to_string()))??;
    Ok(RunReport { host, sensors: stats })
}
