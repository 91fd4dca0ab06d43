use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;
use tokio::time::{interval_at, Instant};
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::StatusCode;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tracing::{debug, info, warn};
use xri_core::codec::QoS;
use xri_core::schema::{check_message, ALL_FILTER};
use xri_core::topic::{TopicFilter, TopicName};
use xri_fabric::{Client, ClientError, ClientOptions, PollError};

use crate::frame::{BrokerStatus, Downstream, ErrorCode, Upstream};
use crate::hub::Hub;
use crate::Allowlist;

pub const WS_PATH: &str = "/xri";

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub allowlist: Allowlist,
    pub heartbeat: Duration,
    /// Unanswered pings after which a client is dropped.
    pub max_missed_pongs: u32,
    /// Frames a slow client may fall behind before it is dropped.
    pub channel_capacity: usize,
    pub client_id: String,
    pub reconnect_backoff: Duration,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            allowlist: Allowlist::default(),
            heartbeat: Duration::from_secs(15),
            max_missed_pongs: 2,
            channel_capacity: 4096,
            client_id: "xri-bridge".into(),
            reconnect_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot listen: {0}")]
    Bind(#[from] io::Error),
    #[error("broker: {0}")]
    Broker(#[from] ClientError),
}

pub struct BridgeHandle {
    addr: SocketAddr,
    hub: Hub,
    fabric: Client,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl BridgeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Connected browser clients.
    pub fn clients(&self) -> usize {
        self.hub.clients()
    }

    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for t in &self.tasks {
            t.abort();
        }
        self.fabric.disconnect().await;
    }
}

/// Connects to the broker, loads the retained state and starts accepting
/// WebSocket clients.
pub async fn serve(ws_addr: impl ToSocketAddrs, broker: SocketAddr, cfg: BridgeConfig) -> Result<BridgeHandle, BridgeError> {
    let listener = TcpListener::bind(ws_addr).await?;
    let addr = listener.local_addr()?;
    let hub = Hub::new(cfg.channel_capacity);
    let fabric = Client::connect(broker, ClientOptions::new(cfg.client_id.clone())).await?;
    fabric
        .subscribe(TopicFilter::new(ALL_FILTER).expect("static filter"), QoS::AtLeastOnce)
        .await?;
    load_retained(&fabric, &hub, &cfg.client_id).await?;
    let (stop, stop_rx) = watch::channel(false);
    let cfg = Arc::new(cfg);
    let pump = tokio::spawn(pump_fabric(fabric.clone(), hub.clone(), cfg.reconnect_backoff));
    let accept = {
        let (hub, fabric, cfg) = (hub.clone(), fabric.clone(), cfg.clone());
        tokio::spawn(async move {
            while let Ok((stream, peer)) = listener.accept().await {
                debug!(%peer, "websocket client");
                tokio::spawn(client_session(stream, hub.clone(), fabric.clone(), cfg.clone(), stop_rx.clone()));
            }
        })
    };
    info!(%addr, %broker, "bridge listening");
    Ok(BridgeHandle {
        addr,
        hub,
        fabric,
        stop,
        tasks: vec![pump, accept],
    })
}

/// Retained messages follow the SUBACK in order, so once a message we send
/// to ourselves comes back every retained message before it has arrived.
async fn load_retained(fabric: &Client, hub: &Hub, client_id: &str) -> Result<(), ClientError> {
    let fence = TopicName::new(format!("bridge-fence/{}", client_id.replace(['+', '#', '/'], "_")))
        .expect("sanitised topic");
    let fence_filter = TopicFilter::new(fence.as_str()).expect("no wildcards");
    fabric.subscribe(fence_filter.clone(), QoS::AtMostOnce).await?;
    fabric.publish(&fence, Vec::new(), QoS::AtLeastOnce, false).await?;
    loop {
        match fabric.poll(Duration::from_secs(5)).await {
            Ok(m) if m.topic == fence => break,
            Ok(m) => hub.message(&m),
            Err(PollError::Timeout) => return Err(ClientError::Timeout),
            Err(PollError::ConnectionLost) => return Err(ClientError::ConnectionLost),
        }
    }
    fabric.unsubscribe(fence_filter).await
}

async fn pump_fabric(fabric: Client, hub: Hub, backoff: Duration) {
    loop {
        match fabric.poll(Duration::from_secs(3600)).await {
            Ok(m) => hub.message(&m),
            Err(PollError::Timeout) => {}
            Err(PollError::ConnectionLost) => {
                warn!("broker connection lost");
                hub.status(BrokerStatus::Down);
                let mut delay = backoff;
                while let Err(e) = fabric.reconnect().await {
                    debug!(error = %e, ?delay, "broker reconnect failed");
                    tokio::time::sleep(delay).await;
                    delay = (delay * 2).min(Duration::from_secs(5));
                }
                info!("broker connection restored");
                hub.status(BrokerStatus::Up);
            }
        }
    }
}

fn route(req: &Request, resp: Response) -> Result<Response, ErrorResponse> {
    if req.uri().path() == WS_PATH {
        return Ok(resp);
    }
    let mut err = ErrorResponse::new(Some(format!("websocket endpoint is {WS_PATH}")));
    *err.status_mut() = StatusCode::NOT_FOUND;
    Err(err)
}

/// Topic and bytes to forward, or the error frame for the client.
fn vet(allowlist: &Allowlist, topic: &str, payload: &Value) -> Result<(TopicName, Vec<u8>), Downstream> {
    let topic = TopicName::new(topic).map_err(|e| Downstream::error(ErrorCode::BadFrame, e.to_string()))?;
    if !allowlist.permits(&topic) {
        return Err(Downstream::error(
            ErrorCode::ForbiddenTopic,
            format!("publishing to {topic} is not allowed"),
        ));
    }
    let bytes = serde_json::to_vec(payload).expect("value serializes");
    check_message(&topic, &bytes).map_err(|e| Downstream::error(ErrorCode::InvalidPayload, e.to_string()))?;
    Ok((topic, bytes))
}

async fn client_session(
    stream: TcpStream,
    hub: Hub,
    fabric: Client,
    cfg: Arc<BridgeConfig>,
    mut stop: watch::Receiver<bool>,
) {
    let _ = stream.set_nodelay(true);
    let ws = match tokio_tungstenite::accept_hdr_async(stream, route).await {
        Ok(ws) => ws,
        Err(e) => {
            debug!(error = %e, "websocket handshake failed");
            return;
        }
    };
    let (mut tx, mut rx) = ws.split();
    let (snapshot, status, mut live) = hub.join();
    if tx.send(WsMessage::text(snapshot.to_text())).await.is_err() {
        return;
    }
    if status == BrokerStatus::Down {
        let _ = tx.send(WsMessage::text(Downstream::Status { broker: status }.to_text())).await;
    }
    let mut heartbeat = interval_at(Instant::now() + cfg.heartbeat, cfg.heartbeat);
    let mut missed = 0u32;
    loop {
        let reply = tokio::select! {
            _ = stop.changed() => break,
            frame = live.recv() => match frame {
                Ok(f) => WsMessage::text(f.as_ref()),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let msg = format!("dropped after falling {n} frames behind");
                    let _ = tx.send(WsMessage::text(Downstream::error(ErrorCode::Lagged, msg).to_text())).await;
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            _ = heartbeat.tick() => {
                if missed >= cfg.max_missed_pongs {
                    debug!("client missed heartbeats");
                    break;
                }
                missed += 1;
                WsMessage::text(Downstream::Ping.to_text())
            }
            msg = rx.next() => match msg {
                None | Some(Err(_)) | Some(Ok(WsMessage::Close(_))) => break,
                Some(Ok(WsMessage::Text(text))) => match serde_json::from_str::<Upstream>(text.as_str()) {
                    Err(e) => WsMessage::text(Downstream::error(ErrorCode::BadFrame, e.to_string()).to_text()),
                    Ok(Upstream::Ping) => WsMessage::text(Downstream::Pong.to_text()),
                    Ok(Upstream::Pong) => {
                        missed = 0;
                        continue;
                    }
                    Ok(Upstream::Publish { topic, payload, retain }) => match vet(&cfg.allowlist, &topic, &payload) {
                        Err(frame) => WsMessage::text(frame.to_text()),
                        Ok((topic, bytes)) => match fabric.publish(&topic, bytes, QoS::AtLeastOnce, retain).await {
                            Ok(()) => continue,
                            Err(e) => WsMessage::text(Downstream::error(ErrorCode::BrokerDown, e.to_string()).to_text()),
                        },
                    },
                },
                Some(Ok(WsMessage::Binary(_))) => {
                    WsMessage::text(Downstream::error(ErrorCode::BadFrame, "frames must be JSON text").to_text())
                }
                Some(Ok(_)) => continue,
            },
        };
        if tx.send(reply).await.is_err() {
            break;
        }
    }
    let _ = tx.close().await;
}
