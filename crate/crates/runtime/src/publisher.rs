use std::time::{Duration, Instant};

use tracing::{debug, warn};
use xri_core::clock::LogicalClock;
use xri_core::codec::QoS;
use xri_core::event::encode_event;
use xri_core::pipeline::PipelineItem;
use xri_core::schema::{topic_for, ClockPayload, CLOCK_TOPIC};
use xri_core::topic::TopicName;
use xri_fabric::{Client, ClientError};

#[derive(Debug, Clone)]
pub struct PublishOptions {
    pub qos: QoS,
    /// Reconnect attempts after a lost connection before giving up.
    pub attempts: u32,
    pub backoff: Duration,
    /// How long to wait for retransmitted publishes to be acknowledged.
    pub flush_timeout: Duration,
}

impl Default for PublishOptions {
    fn default() -> Self {
        Self {
            qos: QoS::AtLeastOnce,
            attempts: 3,
            backoff: Duration::from_millis(100),
            flush_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PublishStats {
    pub events: u64,
    pub ticks: u64,
    pub reconnects: u64,
    pub wall: Duration,
}

/// Publishes once; on connection loss reconnects and waits for the
/// retransmitted message to be acknowledged. Returns the number of
/// reconnects it took.
pub async fn publish_reliably(
    client: &Client,
    topic: &TopicName,
    payload: Vec<u8>,
    retain: bool,
    opts: &PublishOptions,
) -> Result<u64, ClientError> {
    let mut err = match client.publish(topic, payload.clone(), opts.qos, retain).await {
        Ok(()) => return Ok(0),
        Err(e) if e.is_reconnectable() => e,
        Err(e) => return Err(e),
    };
    let qos0 = opts.qos == QoS::AtMostOnce;
    for attempt in 1..=opts.attempts.max(1) as u64 {
        warn!(%topic, attempt, error = %err, "publish interrupted, reconnecting");
        let res = match client.reconnect_with_backoff(opts.attempts, opts.backoff).await {
            // QoS 0 is not queued, so it has to be sent again.
            Ok(()) if qos0 => client.publish(topic, payload.clone(), opts.qos, retain).await,
            Ok(()) => client.flush(opts.flush_timeout).await,
            Err(e) => Err(e),
        };
        match res {
            Ok(()) => return Ok(attempt),
            Err(e) if e.is_reconnectable() => err = e,
            Err(e) => return Err(e),
        }
    }
    Err(err)
}

/// Replays pipeline output: events on their context topics, ticks on the
/// clock topic. Item `i` is sent no earlier than the clock's pacing for
/// the logical span since the first item, so delays never accumulate.
pub async fn publish_items(
    client: &Client,
    items: &[PipelineItem],
    clock: &LogicalClock,
    opts: &PublishOptions,
) -> Result<PublishStats, ClientError> {
    let origin = Instant::now();
    let mut stats = PublishStats::default();
    let Some(first) = items.first() else {
        return Ok(stats);
    };
    let clock_topic = TopicName::new(CLOCK_TOPIC).expect("static topic");
    let t0 = first.ts();
    for item in items {
        let due = origin + clock.pacing(t0, item.ts());
        tokio::time::sleep_until(due.into()).await;
        let (topic, payload) = match item {
            PipelineItem::Event(e) => {
                stats.events += 1;
                (topic_for(e), encode_event(e))
            }
            PipelineItem::Tick { ts, end } => {
                stats.ticks += 1;
                (clock_topic.clone(), ClockPayload::new(*ts, *end).encode())
            }
        };
        stats.reconnects += publish_reliably(client, &topic, payload, false, opts).await?;
    }
    stats.wall = origin.elapsed();
    debug!(events = stats.events, ticks = stats.ticks, wall = ?stats.wall, "sensor replay finished");
    Ok(stats)
}
