use std::io::Write;
use std::net::SocketAddr;
use std::time::Duration;

use tokio::time::MissedTickBehavior;
use tracing::{debug, info, warn};
use xri_core::clock::LogicalClock;
use xri_core::codec::QoS;
use xri_core::scenario::{Effect, Inbound, Scenario};
use xri_fabric::{Client, ClientOptions, PollError};

use crate::publisher::{publish_reliably, PublishOptions};
use crate::RuntimeError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HostClock {
    /// Time comes only from `xri/sys/clock` ticks and event timestamps, so
    /// a lost connection pauses it.
    Scripted,
    /// Time is read from the host clock every `tick`.
    Wall { tick: Duration },
}

#[derive(Debug, Clone)]
pub struct HostOptions {
    pub clock: HostClock,
    /// Give up when nothing arrives for this long.
    pub idle_timeout: Option<Duration>,
    pub publish: PublishOptions,
}

impl Default for HostOptions {
    fn default() -> Self {
        Self {
            clock: HostClock::Scripted,
            idle_timeout: None,
            publish: PublishOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HostReport {
    /// JSON Lines, one record per step; empty when a sink was set.
    pub trace: String,
    pub records: u64,
    pub handled: u64,
    pub ignored: u64,
    pub dropped: u64,
    pub published: u64,
    pub reconnects: u64,
    /// Logical time when the host stopped.
    pub end_ts: u64,
}

pub struct ScenarioHost {
    client: Client,
    scenario: Scenario,
    opts: HostOptions,
    report: HostReport,
    sink: Option<Box<dyn Write + Send>>,
}

impl ScenarioHost {
    /// Connects, subscribes and publishes the initial agent states, so the
    /// host is ready for input when this returns.
    pub async fn connect(
        addr: SocketAddr,
        client_id: impl Into<String>,
        mut scenario: Scenario,
        opts: HostOptions,
    ) -> Result<Self, RuntimeError> {
        let client = Client::connect(addr, ClientOptions::new(client_id)).await?;
        let filters = scenario
            .subscriptions()
            .into_iter()
            .map(|f| (f, QoS::AtLeastOnce))
            .collect();
        client.subscribe_many(filters).await?;
        let start = scenario.start(0);
        let mut host = Self {
            client,
            scenario,
            opts,
            report: HostReport::default(),
            sink: None,
        };
        host.apply(start).await?;
        info!(agents = host.scenario.agents().len(), "scenario host ready");
        Ok(host)
    }

    /// Streams trace lines to `sink` instead of collecting them in the
    /// report. Records already produced by [`ScenarioHost::connect`] are
    /// written first.
    pub fn with_trace_sink(mut self, mut sink: Box<dyn Write + Send>) -> std::io::Result<Self> {
        sink.write_all(self.report.trace.as_bytes())?;
        sink.flush()?;
        self.report.trace.clear();
        self.sink = Some(sink);
        Ok(self)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    async fn apply(&mut self, effects: Vec<Effect>) -> Result<(), RuntimeError> {
        for e in effects {
            match e {
                Effect::Trace(t) => {
                    let line = t.to_line();
                    match self.sink.as_mut() {
                        Some(w) => writeln!(w, "{line}").and_then(|()| w.flush()).map_err(RuntimeError::Trace)?,
                        None => {
                            self.report.trace.push_str(&line);
                            self.report.trace.push('\n');
                        }
                    }
                    self.report.records += 1;
                }
                Effect::Publish { topic, payload, retain } => {
                    self.report.reconnects +=
                        publish_reliably(&self.client, &topic, payload, retain, &self.opts.publish).await?;
                    self.report.published += 1;
                }
            }
        }
        Ok(())
    }

    /// Drives the scenario until the final scripted clock tick.
    pub async fn run(mut self) -> Result<HostReport, RuntimeError> {
        let mut wall = match self.opts.clock {
            HostClock::Scripted => None,
            HostClock::Wall { tick } => {
                let mut iv = tokio::time::interval(tick);
                iv.set_missed_tick_behavior(MissedTickBehavior::Skip);
                Some((LogicalClock::wall(), iv))
            }
        };
        let wait = self.opts.idle_timeout.unwrap_or(Duration::from_secs(3600));
        loop {
            let polled = match wall.as_mut() {
                None => self.client.poll(wait).await,
                Some((clock, iv)) => tokio::select! {
                    m = self.client.poll(wait) => m,
                    _ = iv.tick() => {
                        let fx = self.scenario.advance_to(clock.now_ms());
                        self.apply(fx).await?;
                        continue;
                    }
                },
            };
            match polled {
                Ok(m) => {
                    let (inbound, fx) = self.scenario.handle_message(&m.topic, &m.payload);
                    self.apply(fx).await?;
                    match inbound {
                        Inbound::Handled => self.report.handled += 1,
                        Inbound::Ignored => self.report.ignored += 1,
                        Inbound::Dropped(e) => {
                            warn!(topic = %m.topic, error = %e, "dropped message");
                            self.report.dropped += 1;
                        }
                        Inbound::End => {
                            self.report.handled += 1;
                            break;
                        }
                    }
                }
                Err(PollError::Timeout) if self.opts.idle_timeout.is_some() => {
                    self.client.disconnect().await;
                    return Err(RuntimeError::Idle(wait));
                }
                Err(PollError::Timeout) => {}
                Err(PollError::ConnectionLost) => {
                    warn!("fabric connection lost, reconnecting");
                    let p = &self.opts.publish;
                    self.client.reconnect_with_backoff(p.attempts, p.backoff).await?;
                    self.report.reconnects += 1;
                }
            }
        }
        self.report.end_ts = self.scenario.now();
        debug!(records = self.report.records, "scenario host finished");
        self.client.disconnect().await;
        Ok(self.report)
    }
}
