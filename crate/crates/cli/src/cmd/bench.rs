use std::time::Duration;

use xri_core::codec::QoS;
use xri_fabric::bench::{run_bench, BenchConfig};
use xri_fabric::{serve, BrokerConfig};

use super::emit;
use crate::{parse_duration, resolve, BrokerAddr, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Messages per second.
    #[arg(long, default_value_t = 1000)]
    pub rate: u32,
    #[arg(long, default_value = "5s", value_parser = parse_duration)]
    pub duration: Duration,
    #[arg(long, default_value_t = 10)]
    pub subscribers: usize,
    #[arg(long, default_value_t = 64)]
    pub payload_size: usize,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub qos: u8,
    /// Start an in-process broker instead of connecting to one.
    #[arg(long)]
    pub embedded: bool,
    #[command(flatten)]
    pub broker: BrokerAddr,
}

pub async fn run(args: Args) -> CliResult {
    if args.rate == 0 {
        return Err(CliError::input("--rate must be positive"));
    }
    let embedded = if args.embedded {
        Some(
            serve("127.0.0.1:0", BrokerConfig::default())
                .await
                .map_err(|e| CliError::env(format!("cannot start embedded broker: {e}")))?,
        )
    } else {
        None
    };
    let addr = match &embedded {
        Some(b) => b.local_addr(),
        None => resolve(&args.broker.broker).await?,
    };
    let cfg = BenchConfig {
        rate: args.rate,
        duration: args.duration,
        subscribers: args.subscribers,
        payload_size: args.payload_size,
        qos: if args.qos == 1 { QoS::AtLeastOnce } else { QoS::AtMostOnce },
    };
    let report = run_bench(addr, cfg)
        .await
        .map_err(|e| CliError::connectivity(format!("{addr}: {e}")))?;
    if let Some(b) = embedded {
        b.shutdown().await;
    }
    emit(&report)
}
