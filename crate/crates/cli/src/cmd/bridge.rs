use std::time::Duration;

use xri_bridge::{serve, BridgeConfig, BridgeError, WS_PATH};

use crate::{parse_duration, resolve, shutdown_signal, BrokerAddr, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    #[arg(long, default_value = "15s", value_parser = parse_duration)]
    pub heartbeat: Duration,
    #[command(flatten)]
    pub broker: BrokerAddr,
}

pub async fn run(args: Args) -> CliResult {
    let addr = resolve(&args.broker.broker).await?;
    let cfg = BridgeConfig {
        heartbeat: args.heartbeat,
        client_id: format!("xri-bridge-{}", std::process::id()),
        ..BridgeConfig::default()
    };
    let bridge = serve(args.listen.as_str(), addr, cfg).await.map_err(|e| match e {
        BridgeError::Bind(e) => CliError::env(format!("cannot listen on {}: {e}", args.listen)),
        BridgeError::Broker(e) => CliError::connectivity(format!("{addr}: {e}")),
    })?;
    eprintln!("xri bridge on ws://{}{WS_PATH}", bridge.local_addr());
    shutdown_signal().await;
    bridge.shutdown().await;
    Ok(())
}
