use std::path::PathBuf;
use std::time::Duration;

use serde::Deserialize;
use xri_fabric::{serve, BrokerConfig};

use super::{emit, read_input};
use crate::{parse_duration, shutdown_signal, CliError, CliResult, DEFAULT_BROKER};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = DEFAULT_BROKER)]
    pub listen: String,
    /// JSON file with broker limits.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print a metrics line this often, e.g. `5s`.
    #[arg(long, value_parser = parse_duration)]
    pub metrics_interval: Option<Duration>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    max_packet_size: usize,
    max_sessions: usize,
    session_grace_ms: u64,
    connect_timeout_ms: u64,
}

impl Default for FileConfig {
    fn default() -> Self {
        let d = BrokerConfig::default();
        Self {
            max_packet_size: d.max_packet_size,
            max_sessions: d.max_sessions,
            session_grace_ms: d.session_grace.as_millis() as u64,
            connect_timeout_ms: d.connect_timeout.as_millis() as u64,
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> CliResult<BrokerConfig> {
    let Some(path) = path else {
        return Ok(BrokerConfig::default());
    };
    let text = read_input(path)?;
    let f: FileConfig =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if f.max_sessions == 0 || f.max_packet_size < 2 {
        return Err(CliError::input(format!(
            "{}: max_sessions and max_packet_size must be positive",
            path.display()
        )));
    }
    Ok(BrokerConfig {
        max_packet_size: f.max_packet_size,
        max_sessions: f.max_sessions,
        session_grace: Duration::from_millis(f.session_grace_ms),
        connect_timeout: Duration::from_millis(f.connect_timeout_ms),
    })
}

pub async fn run(args: Args) -> CliResult {
    let cfg = load_config(args.config.as_ref())?;
    let broker = serve(args.listen.as_str(), cfg)
        .await
        .map_err(|e| CliError::env(format!("cannot listen on {}: {e}", args.listen)))?;
    eprintln!("xri broker listening on {}", broker.local_addr());
    let mut ticker = args.metrics_interval.map(|d| tokio::time::interval_at(tokio::time::Instant::now() + d, d));
    let stop = shutdown_signal();
    tokio::pin!(stop);
    loop {
        tokio::select! {
            _ = &mut stop => break,
            _ = async { ticker.as_mut().expect("guarded").tick().await }, if ticker.is_some() => {
                emit(&broker.metrics())?;
            }
        }
    }
    let last = broker.shutdown().await;
    emit(&last)
}
