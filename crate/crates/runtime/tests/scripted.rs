use std::path::PathBuf;
use std::time::Duration;

use xri_core::codec::QoS;
use xri_core::pipeline::{run_offline, PipelineItem};
use xri_core::scenario::{simulate, trace_lines, ScenarioConfig};
use xri_core::schema::AgentStatePayload;
use xri_core::script::SensorScript;
use xri_core::topic::TopicFilter;
use xri_fabric::{serve, BrokerConfig, Client, ClientOptions, PollError};
use xri_runtime::{run_scripted, RunOptions};

fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn demo() -> (ScenarioConfig, Vec<PipelineItem>) {
    let dir = demo_dir();
    let cfg = ScenarioConfig::from_json_str(&std::fs::read_to_string(dir.join("scenario.json")).unwrap()).unwrap();
    let script = SensorScript::parse(&std::fs::read_to_string(dir.join("script.jsonl")).unwrap()).unwrap();
    let frames = script.load_frames(&dir).unwrap();
    let items = run_offline(&script, &frames, &cfg.detector, &cfg.pipeline_options(None)).unwrap();
    (cfg, items)
}

async fn retained_states(addr: std::net::SocketAddr) -> Vec<(String, AgentStatePayload)> {
    let c = Client::connect(addr, ClientOptions::new("inspector")).await.unwrap();
    c.subscribe(TopicFilter::new("xri/agent/+/state").unwrap(), QoS::AtMostOnce).await.unwrap();
    let mut out = Vec::new();
    loop {
        match c.poll(Duration::from_millis(200)).await {
            Ok(m) => {
                assert!(m.retain);
                out.push((m.topic.as_str().to_owned(), AgentStatePayload::decode(&m.payload).unwrap()));
            }
            Err(PollError::Timeout) => break,
            Err(e) => panic!("{e:?}"),
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn networked_trace_matches_offline_simulation() {
    let (cfg, items) = demo();
    let expected = trace_lines(&simulate(cfg.clone(), &items).unwrap());
    let broker = serve("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let report = run_scripted(broker.local_addr(), cfg, &items, &RunOptions::default()).await.unwrap();
    assert_eq!(report.host.trace, expected);
    assert_eq!(report.host.dropped, 0);
    assert_eq!(report.host.end_ts, items.last().unwrap().ts());
    assert_eq!(report.sensors.events + report.sensors.ticks, items.len() as u64);
}

#[tokio::test(flavor = "multi_thread")]
async fn retained_states_match_final_agent_states() {
    let (cfg, items) = demo();
    let broker = serve("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let report = run_scripted(broker.local_addr(), cfg, &items, &RunOptions::default()).await.unwrap();
    let states = retained_states(broker.local_addr()).await;
    let topics: Vec<_> = states.iter().map(|(t, _)| t.as_str()).collect();
    assert_eq!(topics, ["xri/agent/desk/state", "xri/agent/laptop/state", "xri/agent/plant/state"]);
    // The last trace record of each agent names the state it ended in.
    for (topic, payload) in &states {
        let id = topic.split('/').nth(2).unwrap();
        let last = report
            .host
            .trace
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|r| r["agent_id"] == id)
            .last()
            .unwrap();
        assert_eq!(last["state_after"], payload.state.as_str(), "{id}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_script_publishes_only_initial_states() {
    let cfg = ScenarioConfig::workstation();
    let broker = serve("127.0.0.1:0", BrokerConfig::default()).await.unwrap();
    let report = run_scripted(broker.local_addr(), cfg.clone(), &[], &RunOptions::default()).await.unwrap();
    assert_eq!(report.host.trace, trace_lines(&simulate(cfg, &[]).unwrap()));
    let states = retained_states(broker.local_addr()).await;
    let names: Vec<_> = states.iter().map(|(_, p)| p.state.as_str()).collect();
    assert_eq!(names, ["Idle", "Locked", "Healthy"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_broker_is_a_connectivity_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = run_scripted(addr, ScenarioConfig::workstation(), &[], &RunOptions::default())
        .await
        .unwrap_err();
    assert!(err.is_connectivity(), "{err}");
}
