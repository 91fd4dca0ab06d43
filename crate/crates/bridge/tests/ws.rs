use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};
use xri_bridge::{serve as bridge, BridgeConfig};
use xri_core::codec::QoS;
use xri_core::scenario::ScenarioConfig;
use xri_core::topic::{TopicFilter, TopicName};
use xri_fabric::{serve as broker, BrokerConfig, Client, ClientOptions};
use xri_runtime::{run_scripted, RunOptions};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn open(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/xri")).await.unwrap().0
}

async fn next_frame(ws: &mut Ws) -> Value {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(3), ws.next())
            .await
            .expect("frame within 3 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn next_of_type(ws: &mut Ws, ty: &str) -> Value {
    loop {
        let f = next_frame(ws).await;
        if f["type"] == ty {
            return f;
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::text(v.to_string())).await.unwrap();
}

fn presence(value: bool) -> Value {
    json!({"v":1,"zone":"desk1","source":"ui","kind":"Presence","value":value,"ts":0,"seq":0})
}

#[tokio::test(flavor = "multi_thread")]
async fn snapshot_lists_retained_states_after_scenario_start() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    run_scripted(b.local_addr(), ScenarioConfig::workstation(), &[], &RunOptions::default())
        .await
        .unwrap();
    let br = bridge("127.0.0.1:0", b.local_addr(), BridgeConfig::default()).await.unwrap();
    let mut ws = open(br.local_addr()).await;
    let snap = next_frame(&mut ws).await;
    assert_eq!(snap["type"], "snapshot");
    let topics: Vec<&str> = snap["states"].as_array().unwrap().iter().map(|s| s["topic"].as_str().unwrap()).collect();
    assert_eq!(
        topics,
        [
            "xri/agent/desk/state",
            "xri/agent/laptop/state",
            "xri/agent/plant/state",
            "xri/scenario/desk1/situation"
        ]
    );
    assert_eq!(snap["states"][2]["payload"]["state"], "Healthy");
}

#[tokio::test(flavor = "multi_thread")]
async fn forbidden_and_malformed_publishes_are_rejected() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let br = bridge("127.0.0.1:0", b.local_addr(), BridgeConfig::default()).await.unwrap();
    let mut ws = open(br.local_addr()).await;
    next_of_type(&mut ws, "snapshot").await;
    send(&mut ws, json!({"type":"publish","topic":"xri/sys/clock","payload":{"v":1,"ts":9}})).await;
    let e = next_of_type(&mut ws, "error").await;
    assert_eq!(e["code"], "forbidden_topic");
    send(&mut ws, json!({"type":"publish","topic":"xri/context/desk1/ui/presence","payload":{"v":1}})).await;
    assert_eq!(next_of_type(&mut ws, "error").await["code"], "invalid_payload");
    ws.send(Message::text("{not json")).await.unwrap();
    assert_eq!(next_of_type(&mut ws, "error").await["code"], "bad_frame");
    send(&mut ws, json!({"type":"ping"})).await;
    next_of_type(&mut ws, "pong").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn upstream_publish_reaches_fabric_and_fans_out() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let tap = Client::connect(b.local_addr(), ClientOptions::new("tap")).await.unwrap();
    tap.subscribe(TopicFilter::new("xri/context/#").unwrap(), QoS::AtLeastOnce).await.unwrap();
    let br = bridge("127.0.0.1:0", b.local_addr(), BridgeConfig::default()).await.unwrap();
    let mut a = open(br.local_addr()).await;
    let mut c = open(br.local_addr()).await;
    next_of_type(&mut a, "snapshot").await;
    next_of_type(&mut c, "snapshot").await;
    send(&mut a, json!({"type":"publish","topic":"xri/context/desk1/ui/presence","payload":presence(true)})).await;
    let m = tap.poll(Duration::from_secs(3)).await.unwrap();
    assert_eq!(m.topic.as_str(), "xri/context/desk1/ui/presence");
    for ws in [&mut a, &mut c] {
        let ev = next_of_type(ws, "event").await;
        assert_eq!(ev["topic"], "xri/context/desk1/ui/presence");
        assert_eq!(ev["payload"]["value"], true);
        assert!(ev["ts"].as_u64().unwrap() > 0);
    }
    assert_eq!(br.clients(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn per_topic_order_follows_the_fabric() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let br = bridge("127.0.0.1:0", b.local_addr(), BridgeConfig::default()).await.unwrap();
    let mut ws = open(br.local_addr()).await;
    next_of_type(&mut ws, "snapshot").await;
    let p = Client::connect(b.local_addr(), ClientOptions::new("p")).await.unwrap();
    let topic = TopicName::new("xri/test/counter").unwrap();
    for i in 0..200 {
        p.publish(&topic, i.to_string(), QoS::AtMostOnce, false).await.unwrap();
    }
    for i in 0..200 {
        assert_eq!(next_of_type(&mut ws, "event").await["payload"], json!(i));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn retained_updates_refresh_later_snapshots() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let br = bridge("127.0.0.1:0", b.local_addr(), BridgeConfig::default()).await.unwrap();
    let mut first = open(br.local_addr()).await;
    assert_eq!(next_frame(&mut first).await["states"], json!([]));
    let p = Client::connect(b.local_addr(), ClientOptions::new("p")).await.unwrap();
    let topic = TopicName::new("xri/agent/plant/state").unwrap();
    p.publish(&topic, br#"{"state":"Thriving"}"#.to_vec(), QoS::AtLeastOnce, true).await.unwrap();
    next_of_type(&mut first, "event").await;
    let mut second = open(br.local_addr()).await;
    let snap = next_frame(&mut second).await;
    assert_eq!(snap["states"], json!([{"topic": "xri/agent/plant/state", "payload": {"state": "Thriving"}}]));
    p.publish(&topic, Vec::new(), QoS::AtLeastOnce, true).await.unwrap();
    assert_eq!(next_of_type(&mut second, "event").await["payload"], Value::Null);
    let mut third = open(br.local_addr()).await;
    assert_eq!(next_frame(&mut third).await["states"], json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn silent_clients_are_dropped_after_missed_pongs() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let cfg = BridgeConfig {
        heartbeat: Duration::from_millis(100),
        ..Default::default()
    };
    let br = bridge("127.0.0.1:0", b.local_addr(), cfg).await.unwrap();
    let mut silent = open(br.local_addr()).await;
    let mut polite = open(br.local_addr()).await;
    let polite_task = tokio::spawn(async move {
        let deadline = tokio::time::Instant::now() + Duration::from_millis(800);
        while tokio::time::Instant::now() < deadline {
            let f = next_frame(&mut polite).await;
            if f["type"] == "ping" {
                send(&mut polite, json!({"type":"pong"})).await;
            }
        }
        polite
    });
    let mut pings = 0;
    let closed = tokio::time::timeout(Duration::from_secs(2), async {
        while let Some(Ok(m)) = silent.next().await {
            if let Message::Text(t) = m {
                if t.as_str().contains("\"ping\"") {
                    pings += 1;
                }
            }
        }
    })
    .await;
    assert!(closed.is_ok(), "silent client still connected");
    assert_eq!(pings, 2);
    let mut polite = polite_task.await.unwrap();
    send(&mut polite, json!({"type":"ping"})).await;
    next_of_type(&mut polite, "pong").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn clients_hear_about_broker_loss_and_recovery() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let addr = b.local_addr();
    let cfg = BridgeConfig {
        reconnect_backoff: Duration::from_millis(50),
        ..Default::default()
    };
    let br = bridge("127.0.0.1:0", addr, cfg).await.unwrap();
    let mut ws = open(br.local_addr()).await;
    next_of_type(&mut ws, "snapshot").await;
    b.shutdown().await;
    assert_eq!(next_of_type(&mut ws, "status").await["broker"], "down");
    let _b = broker(addr, BrokerConfig::default()).await.unwrap();
    assert_eq!(next_of_type(&mut ws, "status").await["broker"], "up");
}

#[tokio::test(flavor = "multi_thread")]
async fn other_paths_are_refused() {
    let b = broker("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let br = bridge("127.0.0.1:0", b.local_addr(), BridgeConfig::default()).await.unwrap();
    assert!(connect_async(format!("ws://{}/other", br.local_addr())).await.is_err());
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_broker_fails_fast() {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    assert!(bridge("127.0.0.1:0", addr, BridgeConfig::default()).await.is_err());
}
