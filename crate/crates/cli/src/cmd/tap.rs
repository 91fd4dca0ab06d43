use std::time::Duration;

use serde_json::json;
use tokio::time::Instant;
use xri_bridge::payload_value;
use xri_core::codec::QoS;
use xri_core::topic::TopicFilter;
use xri_fabric::{Client, ClientOptions, PollError};

use super::emit;
use crate::{parse_duration, resolve, shutdown_signal, BrokerAddr, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(default_value = "xri/#")]
    pub filter: String,
    /// Exit after this many messages.
    #[arg(long)]
    pub count: Option<u64>,
    /// Exit after this long, e.g. `10s`.
    #[arg(long, value_parser = parse_duration)]
    pub duration: Option<Duration>,
    #[command(flatten)]
    pub broker: BrokerAddr,
}

pub async fn run(args: Args) -> CliResult {
    let filter = TopicFilter::new(args.filter.as_str())
        .map_err(|e| CliError::input(format!("filter {:?}: {e}", args.filter)))?;
    let addr = resolve(&args.broker.broker).await?;
    let client = Client::connect(addr, ClientOptions::new(format!("xri-tap-{}", std::process::id())))
        .await
        .map_err(|e| CliError::connectivity(format!("{addr}: {e}")))?;
    client
        .subscribe(filter, QoS::AtLeastOnce)
        .await
        .map_err(|e| CliError::connectivity(format!("subscribe: {e}")))?;
    let deadline = args.duration.map(|d| Instant::now() + d);
    let stop = shutdown_signal();
    tokio::pin!(stop);
    let mut seen = 0u64;
    while args.count.is_none_or(|n| seen < n) {
        let wait = deadline.map_or(Duration::from_secs(3600), |d| d.saturating_duration_since(Instant::now()));
        let polled = tokio::select! {
            _ = &mut stop => break,
            m = client.poll(wait) => m,
        };
        match polled {
            Ok(m) => {
                seen += 1;
                emit(&json!({
                    "topic": m.topic.as_str(),
                    "payload": payload_value(&m.payload),
                    "qos": m.qos as u8,
                    "retain": m.retain,
                    "dup": m.dup,
                }))?;
            }
            Err(PollError::Timeout) if deadline.is_some_and(|d| Instant::now() >= d) => break,
            Err(PollError::Timeout) => {}
            Err(PollError::ConnectionLost) => return Err(CliError::connectivity("broker connection lost")),
        }
    }
    client.disconnect().await;
    Ok(())
}
