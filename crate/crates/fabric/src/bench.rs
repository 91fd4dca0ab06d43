//! Publish-to-deliver latency measurement on one host.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::time::MissedTickBehavior;
use xri_core::codec::QoS;
use xri_core::topic::{TopicFilter, TopicName};

use crate::client::{Client, ClientError, ClientOptions, PollError};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Messages per second from the single publisher.
    pub rate: u32,
    pub duration: Duration,
    pub subscribers: usize,
    /// At least 16 bytes, which carry a sequence number and send time.
    pub payload_size: usize,
    pub qos: QoS,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rate: 1000,
            duration: Duration::from_secs(5),
            subscribers: 10,
            payload_size: 64,
            qos: QoS::AtMostOnce,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub sent: u64,
    pub expected: u64,
    pub received: u64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub achieved_rate: f64,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub async fn run_bench(addr: SocketAddr, cfg: BenchConfig) -> Result<BenchReport, ClientError> {
    let origin = Instant::now();
    let topic = TopicName::new("bench/latency").expect("static topic");
    let mut subscribers = Vec::new();
    for i in 0..cfg.subscribers {
        let c = Client::connect(addr, ClientOptions::new(format!("bench-sub-{i}"))).await?;
        c.subscribe(TopicFilter::new("bench/#").expect("static filter"), cfg.qos)
            .await?;
        subscribers.push(c);
    }
    let total = (cfg.rate as f64 * cfg.duration.as_secs_f64()).round() as u64;
    let collect_until = origin + cfg.duration + Duration::from_secs(5);
    let mut tasks = Vec::new();
    for c in subscribers {
        tasks.push(tokio::spawn(async move {
            let mut lat = Vec::with_capacity(total as usize);
            while (lat.len() as u64) < total {
                let left = collect_until.saturating_duration_since(Instant::now());
                match c.poll(left).await {
                    Ok(m) if m.payload.len() >= 16 => {
                        let sent_ns = u64::from_be_bytes(m.payload[8..16].try_into().expect("8 bytes"));
                        let now_ns = origin.elapsed().as_nanos() as u64;
                        lat.push(now_ns.saturating_sub(sent_ns) as f64 / 1e6);
                    }
                    Ok(_) => {}
                    Err(PollError::Timeout) | Err(PollError::ConnectionLost) => break,
                }
            }
            c.disconnect().await;
            lat
        }));
    }
    let publisher = Client::connect(addr, ClientOptions::new("bench-pub")).await?;
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / cfg.rate.max(1) as f64));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let started = Instant::now();
    let mut payload = vec![0u8; cfg.payload_size.max(16)];
    for seq in 0..total {
        interval.tick().await;
        payload[..8].copy_from_slice(&seq.to_be_bytes());
        payload[8..16].copy_from_slice(&(origin.elapsed().as_nanos() as u64).to_be_bytes());
        publisher.publish(&topic, payload.clone(), cfg.qos, false).await?;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let mut all = Vec::new();
    for t in tasks {
        all.extend(t.await.expect("subscriber task"));
    }
    publisher.disconnect().await;
    all.sort_by(f64::total_cmp);
    Ok(BenchReport {
        sent: total,
        expected: total * cfg.subscribers as u64,
        received: all.len() as u64,
        p50_ms: percentile(&all, 0.50),
        p99_ms: percentile(&all, 0.99),
        max_ms: all.last().copied().unwrap_or(f64::NAN),
        achieved_rate: total as f64 / elapsed,
    })
}
