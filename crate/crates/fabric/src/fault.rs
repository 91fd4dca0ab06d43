//! A TCP proxy that speaks just enough of the protocol to sabotage it.
//!
//! Every packet crossing the proxy is decoded and logged. Each `n`-th PUBACK
//! travelling in the watched direction is swallowed and the connection is
//! cut both ways, leaving the sender of the acknowledged publish with an
//! unacknowledged message.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;
use xri_core::codec::Packet;

use crate::framing::{write_packet, FrameReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Client to broker.
    Upstream,
    /// Broker to client.
    Downstream,
}

#[derive(Debug, Clone, Copy)]
pub struct FaultPlan {
    /// Zero never kills.
    pub kill_every_nth_puback: u64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeenPublish {
    pub direction: Direction,
    pub packet_id: Option<u16>,
    pub dup: bool,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct ProxyLog {
    pub publishes: Vec<SeenPublish>,
    pub pubacks_seen: u64,
    pub kills: u64,
    pub connections: u64,
}

pub struct FaultProxy {
    addr: SocketAddr,
    log: Arc<Mutex<ProxyLog>>,
    task: JoinHandle<()>,
}

impl FaultProxy {
    pub async fn start(upstream: SocketAddr, plan: FaultPlan) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let log = Arc::new(Mutex::new(ProxyLog::default()));
        let shared = log.clone();
        let task = tokio::spawn(async move {
            while let Ok((client, _)) = listener.accept().await {
                let Ok(broker) = TcpStream::connect(upstream).await else { continue };
                shared.lock().expect("proxy log").connections += 1;
                tokio::spawn(splice(client, broker, plan, shared.clone()));
            }
        });
        Ok(Self { addr, log, task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn log(&self) -> ProxyLog {
        self.log.lock().expect("proxy log").clone()
    }
}

impl Drop for FaultProxy {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn splice(client: TcpStream, broker: TcpStream, plan: FaultPlan, log: Arc<Mutex<ProxyLog>>) {
    let _ = client.set_nodelay(true);
    let _ = broker.set_nodelay(true);
    let (crd, cwr) = client.into_split();
    let (brd, bwr) = broker.into_split();
    tokio::select! {
        _ = pump(crd, bwr, Direction::Upstream, plan, &log) => {}
        _ = pump(brd, cwr, Direction::Downstream, plan, &log) => {}
    }
}

async fn pump(
    rd: tokio::net::tcp::OwnedReadHalf,
    mut wr: tokio::net::tcp::OwnedWriteHalf,
    dir: Direction,
    plan: FaultPlan,
    log: &Mutex<ProxyLog>,
) {
    let mut reader = FrameReader::new(rd, usize::MAX);
    while let Ok(Some(p)) = reader.next().await {
        {
            let mut log = log.lock().expect("proxy log");
            match &p {
                Packet::Publish(p) => log.publishes.push(SeenPublish {
                    direction: dir,
                    packet_id: p.packet_id,
                    dup: p.dup,
                    payload: p.payload.clone(),
                }),
                Packet::PubAck(_) if dir == plan.direction => {
                    log.pubacks_seen += 1;
                    if plan.kill_every_nth_puback > 0 && log.pubacks_seen % plan.kill_every_nth_puback == 0 {
                        log.kills += 1;
                        return;
                    }
                }
                _ => {}
            }
        }
        if write_packet(&mut wr, &p).await.is_err() {
            return;
        }
    }
}
