//! The broker: one task per connection around a single locked registry.
//!
//! All routing, subscription and retained-store mutations happen under the
//! registry lock, and deliveries are queued onto per-connection channels
//! while it is held, so every session observes one total order of publishes.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;
use tokio::time::{sleep_until, timeout};
use xri_core::codec::{
    encode_packet_into, ConnAck, Connect, ConnectReturnCode, Packet, Publish, QoS, SubAck, SubAckCode, Subscribe,
};
use xri_core::router::Router;

use crate::framing::{encode_io, FrameReader};
use tokio::io::AsyncWriteExt;

pub const DEFAULT_MAX_PACKET_SIZE: usize = 1 << 20;
pub const DEFAULT_MAX_SESSIONS: usize = 1024;

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub max_packet_size: usize,
    pub max_sessions: usize,
    /// How long a dropped session's unacknowledged deliveries are kept for a
    /// reconnect under the same client id.
    pub session_grace: Duration,
    /// Time allowed between accepting a socket and its CONNECT.
    pub connect_timeout: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            max_packet_size: DEFAULT_MAX_PACKET_SIZE,
            max_sessions: DEFAULT_MAX_SESSIONS,
            session_grace: Duration::from_secs(30),
            connect_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub clients: usize,
    pub messages_in: u64,
    pub messages_out: u64,
    pub retained: usize,
    pub uptime_ms: u64,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

enum Outbound {
    Packet(Packet),
    /// Another connection took over the session.
    Close,
}

struct Session {
    conn_id: u64,
    tx: mpsc::UnboundedSender<Outbound>,
    next_pid: u16,
    /// QoS 1 deliveries awaiting the client's PUBACK, in send order.
    inflight: IndexMap<u16, Publish>,
}

impl Session {
    fn alloc_pid(&mut self) -> Option<u16> {
        if self.inflight.len() >= u16::MAX as usize {
            return None;
        }
        loop {
            self.next_pid = self.next_pid.wrapping_add(1);
            if self.next_pid != 0 && !self.inflight.contains_key(&self.next_pid) {
                return Some(self.next_pid);
            }
        }
    }

    fn deliver(&mut self, mut p: Publish) {
        p.dup = false;
        p.packet_id = None;
        if p.qos == QoS::AtLeastOnce {
            match self.alloc_pid() {
                Some(pid) => {
                    p.packet_id = Some(pid);
                    self.inflight.insert(pid, p.clone());
                }
                None => p.qos = QoS::AtMostOnce,
            }
        }
        let _ = self.tx.send(Outbound::Packet(Packet::Publish(p)));
    }
}

struct Registry {
    router: Router<String>,
    sessions: HashMap<String, Session>,
    grace: HashMap<String, (Instant, IndexMap<u16, Publish>)>,
    messages_in: u64,
    messages_out: u64,
    next_conn: u64,
}

struct Shared {
    registry: Mutex<Registry>,
    cfg: BrokerConfig,
    started: Instant,
}

impl Shared {
    fn metrics(&self) -> Metrics {
        let reg = self.registry.lock().expect("registry lock");
        Metrics {
            clients: reg.sessions.len(),
            messages_in: reg.messages_in,
            messages_out: reg.messages_out,
            retained: reg.router.retained.len(),
            uptime_ms: self.started.elapsed().as_millis() as u64,
        }
    }
}

/// A running broker.
pub struct BrokerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: watch::Sender<bool>,
    task: tokio::task::JoinHandle<()>,
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn metrics(&self) -> Metrics {
        self.shared.metrics()
    }

    /// Stops accepting, closes every connection and returns final metrics.
    pub async fn shutdown(self) -> Metrics {
        let _ = self.shutdown.send(true);
        let _ = self.task.await;
        self.shared.metrics()
    }
}

/// Binds `addr` and serves until [`BrokerHandle::shutdown`].
pub async fn serve(addr: impl tokio::net::ToSocketAddrs, cfg: BrokerConfig) -> io::Result<BrokerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Shared {
        registry: Mutex::new(Registry {
            router: Router::new(),
            sessions: HashMap::new(),
            grace: HashMap::new(),
            messages_in: 0,
            messages_out: 0,
            next_conn: 0,
        }),
        cfg,
        started: Instant::now(),
    });
    let (tx, rx) = watch::channel(false);
    let task = tokio::spawn(accept_loop(listener, shared.clone(), rx));
    tracing::info!(%local, "broker listening");
    Ok(BrokerHandle {
        addr: local,
        shared,
        shutdown: tx,
        task,
    })
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>, mut shutdown: watch::Receiver<bool>) {
    let mut conns = JoinSet::new();
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    conns.spawn(connection(shared.clone(), stream, peer, shutdown.clone()));
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
            _ = shutdown.changed() => break,
        }
    }
    drop(listener);
    while conns.join_next().await.is_some() {}
}

enum Registered {
    Accepted { client_id: String, conn_id: u64, rx: mpsc::UnboundedReceiver<Outbound> },
    Refused(ConnectReturnCode),
}

fn register(shared: &Shared, connect: &Connect) -> Registered {
    let mut reg = shared.registry.lock().expect("registry lock");
    let now = Instant::now();
    reg.grace.retain(|_, (deadline, _)| *deadline > now);
    reg.next_conn += 1;
    let conn_id = reg.next_conn;
    let client_id = if connect.client_id.is_empty() {
        format!("auto-{conn_id}")
    } else {
        connect.client_id.clone()
    };
    let takeover = reg.sessions.remove(&client_id);
    if takeover.is_none() && reg.sessions.len() >= shared.cfg.max_sessions {
        return Registered::Refused(ConnectReturnCode::ServerUnavailable);
    }
    let mut inflight = IndexMap::new();
    if let Some(old) = takeover {
        tracing::info!(client_id, "session taken over");
        let _ = old.tx.send(Outbound::Close);
        reg.router.subscriptions.remove_session(&client_id);
        inflight = old.inflight;
    } else if let Some((_, kept)) = reg.grace.remove(&client_id) {
        inflight = kept;
    }
    let (tx, rx) = mpsc::unbounded_channel();
    let _ = tx.send(Outbound::Packet(Packet::ConnAck(ConnAck {
        session_present: false,
        code: ConnectReturnCode::Accepted,
    })));
    for p in inflight.values() {
        let mut again = p.clone();
        again.dup = true;
        let _ = tx.send(Outbound::Packet(Packet::Publish(again)));
    }
    let next_pid = inflight.keys().copied().max().unwrap_or(0);
    reg.sessions.insert(
        client_id.clone(),
        Session {
            conn_id,
            tx,
            next_pid,
            inflight,
        },
    );
    Registered::Accepted { client_id, conn_id, rx }
}

async fn connection(shared: Arc<Shared>, stream: TcpStream, peer: SocketAddr, mut shutdown: watch::Receiver<bool>) {
    let (rd, mut wr) = stream.into_split();
    let mut reader = FrameReader::new(rd, shared.cfg.max_packet_size);
    let connect = match timeout(shared.cfg.connect_timeout, reader.next()).await {
        Ok(Ok(Some(Packet::Connect(c)))) => c,
        Ok(Err(e)) => {
            tracing::debug!(%peer, error = %e, "bad first packet");
            return;
        }
        _ => return,
    };
    let (client_id, conn_id, mut rx) = match register(&shared, &connect) {
        Registered::Accepted { client_id, conn_id, rx } => (client_id, conn_id, rx),
        Registered::Refused(code) => {
            let mut out = Vec::new();
            let ack = Packet::ConnAck(ConnAck {
                session_present: false,
                code,
            });
            if encode_packet_into(&ack, &mut out).is_ok() {
                let _ = wr.write_all(&out).await;
            }
            return;
        }
    };
    tracing::debug!(%peer, client_id, "connected");
    let keepalive = (connect.keep_alive > 0).then(|| Duration::from_millis(connect.keep_alive as u64 * 1500));
    let far = tokio::time::Instant::now() + Duration::from_secs(86_400 * 365);
    let mut deadline = keepalive.map_or(far, |k| tokio::time::Instant::now() + k);
    let mut out = Vec::with_capacity(4096);
    let mut abnormal = true;
    loop {
        tokio::select! {
            packet = reader.next() => match packet {
                Ok(Some(p)) => {
                    if let Some(k) = keepalive {
                        deadline = tokio::time::Instant::now() + k;
                    }
                    match handle(&shared, &client_id, p, &mut out) {
                        Flow::Continue => {}
                        Flow::Disconnect => { abnormal = false; break; }
                        Flow::Violation(why) => {
                            tracing::debug!(client_id, why, "protocol violation");
                            break;
                        }
                    }
                    if !out.is_empty() {
                        if wr.write_all(&out).await.is_err() { break; }
                        out.clear();
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    tracing::debug!(client_id, error = %e, "read failed");
                    break;
                }
            },
            msg = rx.recv() => {
                let mut closing = false;
                let mut next = msg;
                while let Some(m) = next {
                    match m {
                        Outbound::Packet(p) => {
                            if let Err(e) = encode_packet_into(&p, &mut out).map_err(encode_io) {
                                tracing::warn!(client_id, error = %e, "dropping unencodable packet");
                            }
                        }
                        Outbound::Close => { closing = true; break; }
                    }
                    if out.len() > 64 * 1024 { break; }
                    next = rx.try_recv().ok();
                }
                if !out.is_empty() {
                    if wr.write_all(&out).await.is_err() { break; }
                    out.clear();
                }
                if closing {
                    return;
                }
            }
            _ = sleep_until(deadline) => {
                tracing::debug!(client_id, "keepalive expired");
                break;
            }
            _ = shutdown.changed() => { abnormal = false; break; }
        }
    }
    let mut reg = shared.registry.lock().expect("registry lock");
    if reg.sessions.get(&client_id).is_some_and(|s| s.conn_id == conn_id) {
        let session = reg.sessions.remove(&client_id).expect("checked");
        reg.router.subscriptions.remove_session(&client_id);
        if abnormal && !session.inflight.is_empty() {
            let until = Instant::now() + shared.cfg.session_grace;
            reg.grace.insert(client_id.clone(), (until, session.inflight));
        }
    }
    tracing::debug!(client_id, abnormal, "disconnected");
}

enum Flow {
    Continue,
    Disconnect,
    Violation(&'static str),
}

fn handle(shared: &Shared, client_id: &str, packet: Packet, out: &mut Vec<u8>) -> Flow {
    let reply = |p: Packet, out: &mut Vec<u8>| {
        encode_packet_into(&p, out).expect("acks always encode");
    };
    match packet {
        Packet::Publish(p) => {
            let pid = p.packet_id;
            {
                let mut reg = shared.registry.lock().expect("registry lock");
                reg.messages_in += 1;
                let deliveries = reg.router.route_publish(&p);
                for d in deliveries {
                    let mut forward = p.clone();
                    forward.qos = d.qos;
                    forward.retain = false;
                    if let Some(s) = reg.sessions.get_mut(&d.session) {
                        s.deliver(forward);
                        reg.messages_out += 1;
                    }
                }
            }
            if let Some(pid) = pid {
                reply(Packet::PubAck(pid), out);
            }
        }
        Packet::PubAck(pid) => {
            let mut reg = shared.registry.lock().expect("registry lock");
            if let Some(s) = reg.sessions.get_mut(client_id) {
                s.inflight.shift_remove(&pid);
            }
        }
        Packet::Subscribe(Subscribe { packet_id, filters }) => {
            let mut reg = shared.registry.lock().expect("registry lock");
            let mut granted = Vec::with_capacity(filters.len());
            for (f, q) in &filters {
                let g = reg.router.subscriptions.subscribe(client_id.to_owned(), f.clone(), *q);
                granted.push((f.clone(), g));
            }
            reply(
                Packet::SubAck(SubAck {
                    packet_id,
                    codes: granted.iter().map(|(_, g)| SubAckCode::Granted(*g)).collect(),
                }),
                out,
            );
            let retained = reg.router.retained_for(&granted);
            let mut sent = 0;
            if let Some(s) = reg.sessions.get_mut(client_id) {
                for (m, qos) in retained {
                    let mut p = Publish::qos0(m.topic, m.payload, true);
                    p.qos = qos;
                    s.deliver(p);
                    sent += 1;
                }
            }
            reg.messages_out += sent;
        }
        Packet::Unsubscribe(u) => {
            let mut reg = shared.registry.lock().expect("registry lock");
            for f in &u.filters {
                reg.router.subscriptions.unsubscribe(&client_id.to_owned(), f);
            }
            reply(Packet::UnsubAck(u.packet_id), out);
        }
        Packet::PingReq => reply(Packet::PingResp, out),
        Packet::Disconnect => return Flow::Disconnect,
        Packet::Connect(_) => return Flow::Violation("second CONNECT"),
        Packet::ConnAck(_) | Packet::SubAck(_) | Packet::UnsubAck(_) | Packet::PingResp => {
            return Flow::Violation("server-to-client packet from client")
        }
    }
    Flow::Continue
}
