//! Async MQTT-subset client.
//!
//! A background driver task owns the socket. QoS 1 publishes stay in the
//! session's inflight table until acknowledged; when the connection drops
//! every waiter fails with [`ClientError::ConnectionLost`], and
//! [`Client::reconnect`] retransmits the table in order with `dup` set and
//! restores subscriptions.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use indexmap::IndexMap;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot, Mutex as AsyncMutex};
use tokio::time::{sleep_until, timeout, Instant};
use xri_core::codec::{
    encode_packet_into, Connect, ConnectReturnCode, Packet, ProtocolError, Publish, QoS, SubAckCode, Subscribe,
    Unsubscribe,
};
use xri_core::topic::{TopicFilter, TopicName};

use crate::framing::{write_packet, FrameError, FrameReader};
use tokio::io::AsyncWriteExt;

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub client_id: String,
    /// Zero disables keepalive.
    pub keep_alive: Duration,
    pub connect_timeout: Duration,
    pub max_packet_size: usize,
}

impl ClientOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            client_id: client_id.into(),
            keep_alive: Duration::from_secs(30),
            connect_timeout: Duration::from_secs(5),
            max_packet_size: crate::broker::DEFAULT_MAX_PACKET_SIZE,
        }
    }

    pub fn keep_alive(mut self, d: Duration) -> Self {
        self.keep_alive = d;
        self
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connect failed: {0}")]
    Io(#[from] io::Error),
    #[error("connection lost")]
    ConnectionLost,
    #[error("broker refused connection: {0:?}")]
    Refused(ConnectReturnCode),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("timed out")]
    Timeout,
    #[error("subscription to {0} rejected")]
    SubscribeRejected(TopicFilter),
    #[error("unexpected {0} during handshake")]
    UnexpectedPacket(&'static str),
}

impl ClientError {
    /// Whether reconnecting may fix the problem.
    pub fn is_reconnectable(&self) -> bool {
        matches!(self, ClientError::ConnectionLost | ClientError::Io(_) | ClientError::Timeout)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PollError {
    #[error("no message before the deadline")]
    Timeout,
    #[error("connection lost")]
    ConnectionLost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: TopicName,
    pub payload: Vec<u8>,
    pub qos: QoS,
    pub retain: bool,
    pub dup: bool,
}

enum Inbound {
    Message(Message),
    Lost,
}

enum Waiter {
    PubAck(oneshot::Sender<()>),
    SubAck(oneshot::Sender<Vec<SubAckCode>>),
    UnsubAck(oneshot::Sender<()>),
}

#[derive(Default)]
struct Session {
    next_pid: u16,
    inflight: IndexMap<u16, Publish>,
    waiters: IndexMap<u16, Waiter>,
    subscriptions: IndexMap<TopicFilter, QoS>,
    /// Driver generation and its command channel while connected.
    conn: Option<(u64, mpsc::UnboundedSender<Packet>)>,
    generation: u64,
}

impl Session {
    fn alloc_pid(&mut self) -> u16 {
        loop {
            self.next_pid = self.next_pid.wrapping_add(1);
            let pid = self.next_pid;
            if pid != 0 && !self.inflight.contains_key(&pid) && !self.waiters.contains_key(&pid) {
                return pid;
            }
        }
    }

    fn send(&self, p: Packet) -> Result<(), ClientError> {
        match &self.conn {
            Some((_, tx)) => tx.send(p).map_err(|_| ClientError::ConnectionLost),
            None => Err(ClientError::ConnectionLost),
        }
    }
}

struct Inner {
    addr: SocketAddr,
    opts: ClientOptions,
    session: Mutex<Session>,
    inbound_tx: mpsc::UnboundedSender<Inbound>,
    inbound_rx: AsyncMutex<mpsc::UnboundedReceiver<Inbound>>,
}

/// Cheap to clone; clones share one session.
#[derive(Clone)]
pub struct Client {
    inner: Arc<Inner>,
}

impl Client {
    pub async fn connect(addr: SocketAddr, opts: ClientOptions) -> Result<Client, ClientError> {
        let (inbound_tx, inbound_rx) = mpsc::unbounded_channel();
        let client = Client {
            inner: Arc::new(Inner {
                addr,
                opts,
                session: Mutex::new(Session::default()),
                inbound_tx,
                inbound_rx: AsyncMutex::new(inbound_rx),
            }),
        };
        client.open().await?;
        Ok(client)
    }

    pub fn client_id(&self) -> &str {
        &self.inner.opts.client_id
    }

    pub fn is_connected(&self) -> bool {
        self.lock().conn.is_some()
    }

    /// Unacknowledged QoS 1 publishes.
    pub fn inflight_len(&self) -> usize {
        self.lock().inflight.len()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.inner.session.lock().expect("session lock")
    }

    async fn open(&self) -> Result<(), ClientError> {
        let opts = &self.inner.opts;
        let stream = timeout(opts.connect_timeout, TcpStream::connect(self.inner.addr))
            .await
            .map_err(|_| ClientError::Timeout)??;
        let _ = stream.set_nodelay(true);
        let (rd, mut wr) = stream.into_split();
        let mut reader = FrameReader::new(rd, opts.max_packet_size);
        let keep_alive = opts.keep_alive.as_secs().min(u16::MAX as u64) as u16;
        write_packet(
            &mut wr,
            &Packet::Connect(Connect {
                client_id: opts.client_id.clone(),
                keep_alive,
                clean_session: true,
            }),
        )
        .await?;
        match timeout(opts.connect_timeout, reader.next()).await {
            Err(_) => return Err(ClientError::Timeout),
            Ok(Err(FrameError::Protocol(e))) => return Err(e.into()),
            Ok(Err(FrameError::Io(e))) => return Err(e.into()),
            Ok(Err(FrameError::UnexpectedEof)) | Ok(Ok(None)) => return Err(ClientError::ConnectionLost),
            Ok(Ok(Some(Packet::ConnAck(ack)))) if ack.code == ConnectReturnCode::Accepted => {}
            Ok(Ok(Some(Packet::ConnAck(ack)))) => return Err(ClientError::Refused(ack.code)),
            Ok(Ok(Some(p))) => return Err(ClientError::UnexpectedPacket(p.kind_name())),
        }
        let (tx, rx) = mpsc::unbounded_channel();
        let subscriptions: Vec<(TopicFilter, QoS)>;
        {
            let mut s = self.lock();
            s.generation += 1;
            let generation = s.generation;
            for p in s.inflight.values() {
                let mut again = p.clone();
                again.dup = true;
                let _ = tx.send(Packet::Publish(again));
            }
            s.conn = Some((generation, tx));
            subscriptions = s.subscriptions.iter().map(|(f, q)| (f.clone(), *q)).collect();
            tokio::spawn(driver(self.inner.clone(), generation, reader, wr, rx));
        }
        if !subscriptions.is_empty() {
            self.subscribe_many(subscriptions).await?;
        }
        Ok(())
    }

    /// Opens a fresh connection, retransmitting unacknowledged publishes
    /// with `dup` set and restoring subscriptions.
    pub async fn reconnect(&self) -> Result<(), ClientError> {
        self.drop_connection();
        self.open().await
    }

    /// Retries [`Client::reconnect`] with doubling backoff.
    pub async fn reconnect_with_backoff(&self, attempts: u32, initial: Duration) -> Result<(), ClientError> {
        let mut delay = initial;
        let mut last = ClientError::ConnectionLost;
        for _ in 0..attempts.max(1) {
            match self.reconnect().await {
                Ok(()) => return Ok(()),
                Err(e) if e.is_reconnectable() => last = e,
                Err(e) => return Err(e),
            }
            tokio::time::sleep(delay).await;
            delay = (delay * 2).min(Duration::from_secs(5));
        }
        Err(last)
    }

    fn drop_connection(&self) {
        let mut s = self.lock();
        s.conn = None;
        s.waiters.clear();
    }

    /// Publishes and, at QoS 1, waits for the broker's acknowledgement. On
    /// connection loss the message stays queued for retransmission.
    pub async fn publish(
        &self,
        topic: &TopicName,
        payload: impl Into<Vec<u8>>,
        qos: QoS,
        retain: bool,
    ) -> Result<(), ClientError> {
        let payload = payload.into();
        let rx = {
            let mut s = self.lock();
            match qos {
                QoS::AtMostOnce => {
                    return s.send(Packet::Publish(Publish::qos0(topic.clone(), payload, retain)));
                }
                QoS::AtLeastOnce => {
                    let pid = s.alloc_pid();
                    let p = Publish::qos1(topic.clone(), payload, retain, pid);
                    s.inflight.insert(pid, p.clone());
                    let (tx, rx) = oneshot::channel();
                    s.waiters.insert(pid, Waiter::PubAck(tx));
                    s.send(Packet::Publish(p))?;
                    rx
                }
            }
        };
        rx.await.map_err(|_| ClientError::ConnectionLost)
    }

    pub async fn subscribe(&self, filter: TopicFilter, qos: QoS) -> Result<QoS, ClientError> {
        Ok(self.subscribe_many(vec![(filter, qos)]).await?[0])
    }

    pub async fn subscribe_many(&self, filters: Vec<(TopicFilter, QoS)>) -> Result<Vec<QoS>, ClientError> {
        let rx = {
            let mut s = self.lock();
            let pid = s.alloc_pid();
            let (tx, rx) = oneshot::channel();
            s.waiters.insert(pid, Waiter::SubAck(tx));
            s.send(Packet::Subscribe(Subscribe {
                packet_id: pid,
                filters: filters.clone(),
            }))?;
            rx
        };
        let codes = rx.await.map_err(|_| ClientError::ConnectionLost)?;
        let mut granted = Vec::with_capacity(codes.len());
        let mut s = self.lock();
        for ((f, _), code) in filters.into_iter().zip(codes) {
            match code {
                SubAckCode::Granted(q) => {
                    s.subscriptions.insert(f, q);
                    granted.push(q);
                }
                SubAckCode::Failure => return Err(ClientError::SubscribeRejected(f)),
            }
        }
        Ok(granted)
    }

    pub async fn unsubscribe(&self, filter: TopicFilter) -> Result<(), ClientError> {
        let rx = {
            let mut s = self.lock();
            s.subscriptions.shift_remove(&filter);
            let pid = s.alloc_pid();
            let (tx, rx) = oneshot::channel();
            s.waiters.insert(pid, Waiter::UnsubAck(tx));
            s.send(Packet::Unsubscribe(Unsubscribe {
                packet_id: pid,
                filters: vec![filter],
            }))?;
            rx
        };
        rx.await.map_err(|_| ClientError::ConnectionLost)
    }

    /// Next inbound message. A connection loss is reported once, in order
    /// with the messages received before it.
    pub async fn poll(&self, deadline: Duration) -> Result<Message, PollError> {
        let mut rx = self.inner.inbound_rx.lock().await;
        match timeout(deadline, rx.recv()).await {
            Err(_) => Err(PollError::Timeout),
            Ok(Some(Inbound::Message(m))) => Ok(m),
            Ok(Some(Inbound::Lost)) | Ok(None) => Err(PollError::ConnectionLost),
        }
    }

    /// Waits until every QoS 1 publish has been acknowledged.
    pub async fn flush(&self, deadline: Duration) -> Result<(), ClientError> {
        let end = Instant::now() + deadline;
        while self.inflight_len() > 0 {
            if !self.is_connected() {
                return Err(ClientError::ConnectionLost);
            }
            if Instant::now() >= end {
                return Err(ClientError::Timeout);
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        Ok(())
    }

    /// Sends DISCONNECT and closes the socket; inflight messages are dropped.
    pub async fn disconnect(&self) {
        let tx = {
            let mut s = self.lock();
            s.inflight.clear();
            s.waiters.clear();
            s.conn.take()
        };
        if let Some((_, tx)) = tx {
            let _ = tx.send(Packet::Disconnect);
        }
    }
}

async fn driver(
    inner: Arc<Inner>,
    generation: u64,
    mut reader: FrameReader<tokio::net::tcp::OwnedReadHalf>,
    mut wr: tokio::net::tcp::OwnedWriteHalf,
    mut rx: mpsc::UnboundedReceiver<Packet>,
) {
    let keep_alive = inner.opts.keep_alive;
    let idle_limit = keep_alive.mul_f64(1.5);
    let far = Instant::now() + Duration::from_secs(86_400 * 365);
    let mut ping_at = if keep_alive.is_zero() { far } else { Instant::now() + keep_alive / 2 };
    let mut dead_at = if keep_alive.is_zero() { far } else { Instant::now() + idle_limit };
    let mut out = Vec::with_capacity(4096);
    let mut disconnecting = false;
    loop {
        tokio::select! {
            cmd = rx.recv() => {
                let Some(first) = cmd else { break };
                let mut next = Some(first);
                while let Some(p) = next {
                    disconnecting |= p == Packet::Disconnect;
                    if encode_packet_into(&p, &mut out).is_err() {
                        tracing::warn!("dropping unencodable packet");
                    }
                    if out.len() > 64 * 1024 { break; }
                    next = rx.try_recv().ok();
                }
                if wr.write_all(&out).await.is_err() { break; }
                out.clear();
                if disconnecting {
                    let _ = wr.shutdown().await;
                    return;
                }
                if !keep_alive.is_zero() {
                    ping_at = Instant::now() + keep_alive / 2;
                }
            }
            packet = reader.next() => {
                let p = match packet {
                    Ok(Some(p)) => p,
                    Ok(None) => break,
                    Err(e) => {
                        tracing::debug!(error = %e, "client read failed");
                        break;
                    }
                };
                if !keep_alive.is_zero() {
                    dead_at = Instant::now() + idle_limit;
                }
                if let Some(reply) = dispatch(&inner, generation, p) {
                    out.clear();
                    if encode_packet_into(&reply, &mut out).is_err() || wr.write_all(&out).await.is_err() {
                        break;
                    }
                    out.clear();
                }
            }
            _ = sleep_until(ping_at) => {
                if write_packet(&mut wr, &Packet::PingReq).await.is_err() { break; }
                ping_at = Instant::now() + keep_alive / 2;
            }
            _ = sleep_until(dead_at) => {
                tracing::debug!("broker silent past keepalive");
                break;
            }
        }
    }
    let mut s = inner.session.lock().expect("session lock");
    if s.conn.as_ref().is_some_and(|(g, _)| *g == generation) {
        s.conn = None;
        s.waiters.clear();
        let _ = inner.inbound_tx.send(Inbound::Lost);
    }
}

fn dispatch(inner: &Inner, generation: u64, p: Packet) -> Option<Packet> {
    match p {
        Packet::Publish(p) => {
            let ack = p.packet_id.map(Packet::PubAck);
            let _ = inner.inbound_tx.send(Inbound::Message(Message {
                topic: p.topic,
                payload: p.payload,
                qos: p.qos,
                retain: p.retain,
                dup: p.dup,
            }));
            ack
        }
        Packet::PubAck(pid) => {
            let mut s = inner.session.lock().expect("session lock");
            if s.conn.as_ref().is_some_and(|(g, _)| *g == generation) {
                s.inflight.shift_remove(&pid);
                if let Some(Waiter::PubAck(tx)) = s.waiters.shift_remove(&pid) {
                    let _ = tx.send(());
                }
            }
            None
        }
        Packet::SubAck(ack) => {
            let mut s = inner.session.lock().expect("session lock");
            if let Some(Waiter::SubAck(tx)) = s.waiters.shift_remove(&ack.packet_id) {
                let _ = tx.send(ack.codes);
            }
            None
        }
        Packet::UnsubAck(pid) => {
            let mut s = inner.session.lock().expect("session lock");
            if let Some(Waiter::UnsubAck(tx)) = s.waiters.shift_remove(&pid) {
                let _ = tx.send(());
            }
            None
        }
        _ => None,
    }
}
