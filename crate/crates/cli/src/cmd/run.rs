use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use xri_core::pipeline::run_offline;
use xri_core::scenario::ScenarioConfig;
use xri_core::script::SensorScript;
use xri_fabric::{serve, BrokerConfig};
use xri_runtime::{run_scripted, RunOptions};

use super::{emit, read_input};
use crate::{resolve, BrokerAddr, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "demo/scenario.json")]
    pub scenario: PathBuf,
    #[arg(long, default_value = "demo/script.jsonl")]
    pub script: PathBuf,
    /// Directory that frame references are relative to; defaults to the
    /// script's directory.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Logical ms per wall ms; 0 replays as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Overrides the script's noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trace file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Start an in-process broker instead of connecting to one.
    #[arg(long)]
    pub embedded: bool,
    #[command(flatten)]
    pub broker: BrokerAddr,
}

#[derive(Serialize)]
struct Summary<'a> {
    trace: &'a str,
    records: u64,
    events: u64,
    ticks: u64,
    end_ts: u64,
    wall_ms: u64,
}

pub(crate) fn load_scenario(path: &Path) -> CliResult<ScenarioConfig> {
    ScenarioConfig::from_json_str(&read_input(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub async fn run(args: Args) -> CliResult {
    if !(args.speed.is_finite() && args.speed >= 0.0) {
        return Err(CliError::input(format!("--speed must be a non-negative number, got {}", args.speed)));
    }
    let cfg = load_scenario(&args.scenario)?;
    let script = SensorScript::parse(&read_input(&args.script)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.script.display())))?;
    let base = args
        .frames
        .clone()
        .unwrap_or_else(|| args.script.parent().map(Path::to_path_buf).unwrap_or_default());
    let frames = script.load_frames(&base).map_err(CliError::input)?;
    let items = run_offline(&script, &frames, &cfg.detector, &cfg.pipeline_options(args.seed))
        .map_err(|e| CliError::input(format!("{}: {e}", args.script.display())))?;

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
    let opts = RunOptions {
        speed: args.speed,
        client_prefix: format!("xri-run-{}", std::process::id()),
        ..RunOptions::default()
    };
    let started = Instant::now();
    let report = run_scripted(addr, cfg, &items, &opts).await?;
    if let Some(b) = embedded {
        b.shutdown().await;
    }
    let wall_ms = started.elapsed().as_millis() as u64;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &report.host.trace)
                .map_err(|e| CliError::env(format!("{}: {e}", path.display())))?;
            emit(&Summary {
                trace: &path.display().to_string(),
                records: report.host.records,
                events: report.sensors.events,
                ticks: report.sensors.ticks,
                end_ts: report.host.end_ts,
                wall_ms,
            })
        }
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(report.host.trace.as_bytes())
                .and_then(|()| out.flush())
                .map_err(CliError::env)
        }
    }
}
