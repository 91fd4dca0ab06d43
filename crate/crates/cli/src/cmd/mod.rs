pub mod bench;
pub mod bridge;
pub mod broker;
pub mod host;
pub mod inject;
pub mod run;
pub mod tap;

use std::io::Write;

use crate::{CliError, CliResult, Command};

pub async fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Broker(a) => broker::run(a).await,
        Command::Run(a) => run::run(a).await,
        Command::Host(a) => host::run(a).await,
        Command::Inject(a) => inject::run(a).await,
        Command::Tap(a) => tap::run(a).await,
        Command::Bench(a) => bench::run(a).await,
        Command::Bridge(a) => bridge::run(a).await,
    }
}

/// Writes one JSON line to stdout.
pub(crate) fn emit(v: &impl serde::Serialize) -> CliResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, v).map_err(CliError::env)?;
    writeln!(out).and_then(|()| out.flush()).map_err(CliError::env)
}

pub(crate) fn read_input(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}
