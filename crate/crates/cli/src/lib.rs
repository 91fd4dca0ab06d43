//! The `xri` command: broker, scenario runs, event injection, taps,
//! benchmarks and the dashboard bridge.
//!
//! Exit codes: 0 success, 2 environment, 3 input, 4 connectivity. Machine
//! output on stdout is JSON Lines; diagnostics go to stderr.

mod cmd;
mod error;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult, Failure};

pub const DEFAULT_BROKER: &str = "127.0.0.1:1883";

#[derive(Debug, Parser)]
#[command(name = "xri", version, about = "Hybrid-object workstation runtime")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct BrokerAddr {
    /// Broker address, host:port.
    #[arg(long = "broker", env = "XRI_BROKER", default_value = DEFAULT_BROKER)]
    pub broker: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the message broker until interrupted.
    Broker(cmd::broker::Args),
    /// Replay a sensor script through the scenario and write its trace.
    Run(cmd::run::Args),
    /// Host the scenario on the wall clock until interrupted.
    Host(cmd::host::Args),
    /// Publish one message.
    Inject(cmd::inject::Args),
    /// Print matching messages as JSON lines.
    Tap(cmd::tap::Args),
    /// Measure publish-to-deliver latency.
    Bench(cmd::bench::Args),
    /// Serve the WebSocket bridge for browser dashboards.
    Bridge(cmd::bridge::Args),
}

pub fn parse_duration(s: &str) -> Result<Duration, String> {
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

pub(crate) async fn resolve(addr: &str) -> CliResult<SocketAddr> {
    tokio::net::lookup_host(addr)
        .await
        .map_err(|e| CliError::connectivity(format!("cannot resolve {addr}: {e}")))?
        .next()
        .ok_or_else(|| CliError::connectivity(format!("{addr} resolves to nothing")))
}

/// Resolves when the process is asked to stop.
pub(crate) async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("signal handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("XRI_LOG").unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Entry point shared by the binary and tests.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Failure::Input.code());
        }
    };
    init_logging();
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("xri: cannot start runtime: {e}");
            return ExitCode::from(Failure::Environment.code());
        }
    };
    match rt.block_on(cmd::dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xri: {e}");
            e.exit_code()
        }
    }
}
