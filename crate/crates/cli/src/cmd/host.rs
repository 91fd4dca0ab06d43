use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use xri_core::scenario::Scenario;
use xri_runtime::{HostClock, HostOptions, ScenarioHost};

use super::run::load_scenario;
use crate::{parse_duration, resolve, shutdown_signal, BrokerAddr, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "demo/scenario.json")]
    pub scenario: PathBuf,
    /// Trace file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// How often the pomodoro timer is advanced.
    #[arg(long, default_value = "1s", value_parser = parse_duration)]
    pub tick: Duration,
    #[command(flatten)]
    pub broker: BrokerAddr,
}

pub async fn run(args: Args) -> CliResult {
    let cfg = load_scenario(&args.scenario)?;
    let scenario = Scenario::new(cfg).map_err(CliError::input)?;
    let addr = resolve(&args.broker.broker).await?;
    let sink: Box<dyn Write + Send> = match &args.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::env(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    let opts = HostOptions {
        clock: HostClock::Wall { tick: args.tick },
        ..HostOptions::default()
    };
    let host = ScenarioHost::connect(addr, format!("xri-host-{}", std::process::id()), scenario, opts)
        .await?
        .with_trace_sink(sink)
        .map_err(CliError::env)?;
    eprintln!("xri host running against {addr}");
    tokio::select! {
        r = host.run() => r.map(|_| ()).map_err(Into::into),
        _ = shutdown_signal() => Ok(()),
    }
}
