use serde_json::json;
use xri_core::codec::QoS;
use xri_core::event::{encode_event, Activity, ContextEvent, EventValue};
use xri_core::schema::{check_message, topic_for};
use xri_core::topic::TopicName;
use xri_fabric::{Client, ClientOptions};

use super::emit;
use crate::{resolve, BrokerAddr, CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, required_unless_present = "event", requires = "payload")]
    pub topic: Option<String>,
    /// Message body; `@path` reads it from a file.
    #[arg(long)]
    pub payload: Option<String>,
    /// Build a context event instead: `presence=true`, `light=off`,
    /// `activity=Working`, `moisture=0.9` or `command=resume[,arg...]`.
    #[arg(long, conflicts_with_all = ["topic", "payload"])]
    pub event: Option<String>,
    #[arg(long, default_value = "desk1")]
    pub zone: String,
    #[arg(long, default_value = "cli")]
    pub source: String,
    #[arg(long, default_value_t = 0)]
    pub ts: u64,
    #[arg(long, default_value_t = 0)]
    pub seq: u64,
    /// Skip schema checks on `xri/...` topics.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub retain: bool,
    #[command(flatten)]
    pub broker: BrokerAddr,
}

fn event_value(spec: &str) -> Result<EventValue, String> {
    let (kind, value) = spec.split_once('=').ok_or("expected kind=value")?;
    let bad = || format!("invalid {kind} value {value:?}");
    Ok(match kind {
        "presence" => EventValue::Presence(value.parse().map_err(|_| bad())?),
        "light" => {
            let on = match value {
                "on" | "true" => true,
                "off" | "false" => false,
                _ => return Err(bad()),
            };
            EventValue::LightLevel {
                on,
                mean_luminance: if on { 255.0 } else { 0.0 },
            }
        }
        "activity" => EventValue::Activity(Activity::from_name(value).ok_or_else(bad)?),
        "moisture" => EventValue::Moisture(value.parse().map_err(|_| bad())?),
        "command" => {
            let mut parts = value.split(',');
            let verb = parts.next().filter(|v| !v.is_empty()).ok_or_else(bad)?;
            EventValue::command(verb, parts)
        }
        _ => return Err(format!("unknown event kind {kind:?}")),
    })
}

fn message(args: &Args) -> CliResult<(TopicName, Vec<u8>)> {
    if let Some(spec) = &args.event {
        let value = event_value(spec).map_err(CliError::input)?;
        let e = ContextEvent::new(&args.zone, &args.source, value, args.ts, args.seq).map_err(CliError::input)?;
        return Ok((topic_for(&e), encode_event(&e)));
    }
    let topic = args.topic.as_deref().expect("clap enforces --topic");
    let topic = TopicName::new(topic).map_err(|e| CliError::input(format!("topic {topic:?}: {e}")))?;
    let payload = match args.payload.as_deref().expect("clap enforces --payload") {
        p if p.starts_with('@') => {
            std::fs::read(&p[1..]).map_err(|e| CliError::input(format!("{}: {e}", &p[1..])))?
        }
        p => p.as_bytes().to_vec(),
    };
    if !args.raw {
        check_message(&topic, &payload).map_err(|e| CliError::input(format!("{topic}: {e} (use --raw to skip checks)")))?;
    }
    Ok((topic, payload))
}

pub async fn run(args: Args) -> CliResult {
    let (topic, payload) = message(&args)?;
    let addr = resolve(&args.broker.broker).await?;
    let client = Client::connect(addr, ClientOptions::new(format!("xri-inject-{}", std::process::id())))
        .await
        .map_err(|e| CliError::connectivity(format!("{addr}: {e}")))?;
    let bytes = payload.len();
    client
        .publish(&topic, payload, QoS::AtLeastOnce, args.retain)
        .await
        .map_err(|e| CliError::connectivity(format!("publish to {topic}: {e}")))?;
    client.disconnect().await;
    emit(&json!({"published": topic.as_str(), "bytes": bytes, "retain": args.retain}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_events() {
        assert_eq!(event_value("presence=true"), Ok(EventValue::Presence(true)));
        assert_eq!(
            event_value("light=off"),
            Ok(EventValue::LightLevel {
                on: false,
                mean_luminance: 0.0
            })
        );
        assert_eq!(event_value("activity=Working"), Ok(EventValue::Activity(Activity::Working)));
        assert_eq!(event_value("moisture=0.5"), Ok(EventValue::Moisture(0.5)));
        assert_eq!(event_value("command=resume"), Ok(EventValue::command("resume", Vec::<String>::new())));
        assert!(event_value("presence=maybe").is_err());
        assert!(event_value("smell=bad").is_err());
        assert!(event_value("presence").is_err());
    }
}
