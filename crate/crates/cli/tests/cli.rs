//! Drives the `xri` binary as an operator would.

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStderr, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn xri() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xri"));
    c.current_dir(workspace());
    c
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    xri().args(args).output().expect("spawn xri")
}

fn closed_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    drop(l);
    addr
}

fn interrupt(child: &Child) {
    let status = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
}

struct Broker {
    child: Option<Child>,
    addr: String,
    stderr: BufReader<ChildStderr>,
}

impl Broker {
    fn start(extra: &[&str]) -> Broker {
        let mut child = xri()
            .args(["broker", "--listen", "127.0.0.1:0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut stderr = BufReader::new(child.stderr.take().unwrap());
        let mut line = String::new();
        stderr.read_line(&mut line).unwrap();
        let addr = line.trim().rsplit(' ').next().unwrap().to_string();
        Broker {
            child: Some(child),
            addr,
            stderr,
        }
    }

    fn stop(mut self) -> Vec<Value> {
        let child = self.child.take().unwrap();
        interrupt(&child);
        let mut rest = String::new();
        let _ = std::io::Read::read_to_string(&mut self.stderr, &mut rest);
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success(), "broker exited {:?}: {rest}", out.status);
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        if let Some(c) = &mut self.child {
            let _ = c.kill();
        }
    }
}

#[test]
fn paced_demo_finishes_a_pomodoro_cycle_within_budget() {
    let out = std::env::temp_dir().join(format!("xri-speed60-{}.jsonl", std::process::id()));
    let started = Instant::now();
    let res = run(&["run", "--embedded", "--speed", "60", "--seed", "7", "--out", out.to_str().unwrap()]);
    let wall = started.elapsed();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(wall <= Duration::from_secs(35), "took {wall:?}");
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(summary["end_ts"], 1_810_000);
    let trace = std::fs::read_to_string(&out).unwrap();
    std::fs::remove_file(&out).unwrap();
    let golden = std::fs::read_to_string(workspace().join("demo/golden_trace.jsonl")).unwrap();
    assert_eq!(trace, golden, "pacing must not change the trace");
    assert!(trace.contains(r#""ts":1800000,"scenario":"pomodoro","event":{"type":"boundary"},"state_before":"Break","state_after":"Work""#));
}

#[test]
fn unpaced_run_prints_trace_to_stdout() {
    let res = run(&["run", "--embedded", "--speed", "0"]);
    assert!(res.status.success());
    let golden = std::fs::read(workspace().join("demo/golden_trace.jsonl")).unwrap();
    assert_eq!(res.stdout, golden);
}

#[test]
fn malformed_scenario_is_an_input_error_naming_the_field() {
    let dir = std::env::temp_dir().join(format!("xri-badcfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("scenario.json");
    std::fs::write(&path, r#"{"tick_ms": "fast"}"#).unwrap();
    let res = run(&["run", "--embedded", "--speed", "0", "--scenario", path.to_str().unwrap()]);
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("tick_ms"), "{err}");
}

#[test]
fn exit_codes_follow_the_contract() {
    let gone = closed_port();
    assert_eq!(run(&["run", "--speed", "0", "--broker", &gone]).status.code(), Some(4));
    assert_eq!(run(&["tap", "--broker", &gone, "xri/#"]).status.code(), Some(4));
    assert_eq!(run(&["tap", "a/#/b"]).status.code(), Some(3));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(3));
    assert_eq!(run(&["run", "--speed", "-1"]).status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let res = run(&["broker", "--listen", &addr]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!res.stderr.is_empty());
    let res = run(&["bridge", "--listen", &addr, "--broker", &gone]);
    assert!(matches!(res.status.code(), Some(2 | 4)), "{:?}", res.status);
}

#[test]
fn inject_checks_schemas_unless_raw() {
    let broker = Broker::start(&[]);
    let b = broker.addr.as_str();
    let res = run(&["inject", "--broker", b, "--topic", "xri/context/desk1/cam0/presence", "--payload", r#"{"bad":1}"#]);
    assert_eq!(res.status.code(), Some(3));
    let res = run(&["inject", "--broker", b, "--raw", "--topic", "lab/raw", "--payload", "\u{1}\u{2}"]);
    assert!(res.status.success());
    let ack: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(ack["published"], "lab/raw");
    let res = run(&["inject", "--broker", b, "--event", "light=on", "--retain"]);
    assert!(res.status.success());
    assert_eq!(
        serde_json::from_slice::<Value>(&res.stdout).unwrap()["published"],
        "xri/context/desk1/cli/light"
    );
    let metrics = broker.stop();
    assert_eq!(metrics.last().unwrap()["retained"], 1);
}

#[test]
fn injected_presence_updates_the_situation_seen_by_tap() {
    let broker = Broker::start(&["--metrics-interval", "200ms"]);
    let b = broker.addr.clone();
    let mut host = xri().args(["host", "--broker", &b]).stdout(Stdio::null()).stderr(Stdio::piped()).spawn().unwrap();
    let mut host_err = BufReader::new(host.stderr.take().unwrap());
    let mut line = String::new();
    host_err.read_line(&mut line).unwrap();
    assert!(line.contains("running"), "{line}");

    let mut tap = xri()
        .args(["tap", "--broker", &b, "--count", "2", "--duration", "10s", "xri/scenario/desk1/situation"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(tap.stdout.take().unwrap()).lines();
    let retained: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(retained["retain"], true);
    assert_eq!(retained["payload"]["user_mode"], "Away");

    let res = run(&["inject", "--broker", &b, "--event", "presence=true"]);
    assert!(res.status.success());
    let live: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(live["payload"]["user_mode"], "Break");
    assert!(tap.wait().unwrap().success(), "tap exits at its count");

    interrupt(&host);
    assert!(host.wait().unwrap().success());
    std::thread::sleep(Duration::from_millis(500));
    let metrics = broker.stop();
    assert!(metrics.len() >= 2, "periodic metrics plus the final line");
    assert!(metrics.last().unwrap()["messages_in"].as_u64().unwrap() > 0);
}

#[test]
fn tap_ends_after_its_duration_without_traffic() {
    let broker = Broker::start(&[]);
    let started = Instant::now();
    let res = run(&["tap", "--broker", &broker.addr, "--duration", "300ms", "quiet/#"]);
    assert!(res.status.success());
    assert!(res.stdout.is_empty());
    assert!(started.elapsed() < Duration::from_secs(5));
}
