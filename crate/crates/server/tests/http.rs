use std::path::PathBuf;
use std::time::Duration;

use serde_json::Value;
use susbp_core::monitor::{SessionConfig, Snapshot};
use susbp_core::sensors::detect_hygiene_episodes;
use susbp_core::simulate::{ScenarioScript, ScriptedEpisode, Simulation};
use susbp_server::{FeedSource, Server, ServerConfig, ServerError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::time::{sleep, timeout, Instant};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("susbp-server-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn three_episodes() -> Simulation {
    let script = ScenarioScript {
        noise_std_g: 0.3,
        sample_period_s: 0.05,
        episodes: vec![
            ScriptedEpisode::new(20.0, 25.0, 3.5),
            ScriptedEpisode::new(80.0, 32.0, 4.2),
            ScriptedEpisode::new(150.0, 18.0, 2.0),
        ],
        ..Default::default()
    };
    script.generate().unwrap()
}

fn feed_file(name: &str, text: &str) -> PathBuf {
    let path = scratch(name).join("feed.jsonl");
    std::fs::write(&path, text).unwrap();
    path
}

async fn start(feed: FeedSource, session: SessionConfig, speed: f64, export_dir: Option<PathBuf>) -> (Server, String) {
    let config = ServerConfig { bind: "127.0.0.1:0".into(), feed, session, speed: Some(speed), export_dir };
    let server = Server::bind(config).await.unwrap();
    let addr = server.local_addr().unwrap().to_string();
    (server, addr)
}

fn launch(server: Server) {
    tokio::spawn(server.run());
}

/// Decode a chunked body; returns the decoded bytes and whether the final chunk was seen.
fn dechunk(mut raw: &[u8]) -> (Vec<u8>, bool) {
    let mut out = Vec::new();
    loop {
        let Some(eol) = raw.windows(2).position(|w| w == b"\r\n") else { return (out, false) };
        let size = usize::from_str_radix(std::str::from_utf8(&raw[..eol]).unwrap().trim(), 16).unwrap();
        if size == 0 {
            return (out, true);
        }
        let body = &raw[eol + 2..];
        if body.len() < size + 2 {
            return (out, false);
        }
        out.extend_from_slice(&body[..size]);
        raw = &body[size + 2..];
    }
}

struct Response {
    status: u16,
    headers: String,
    body: String,
}

async fn get(addr: &str, path: &str) -> Response {
    let mut conn = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    conn.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    conn.read_to_end(&mut raw).await.unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let headers = String::from_utf8(raw[..split].to_vec()).unwrap();
    let status = headers.split(' ').nth(1).unwrap().parse().unwrap();
    let mut body = raw[split + 4..].to_vec();
    if headers.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        body = dechunk(&body).0;
    }
    Response { status, headers, body: String::from_utf8(body).unwrap() }
}

async fn get_json(addr: &str, path: &str) -> Value {
    let r = get(addr, path).await;
    assert_eq!(r.status, 200, "{path}: {}", r.body);
    serde_json::from_str(&r.body).unwrap()
}

async fn wait_for_state(addr: &str, state: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let h = get_json(addr, "/healthz").await;
        if h["state"] == state {
            return h;
        }
        assert!(Instant::now() < deadline, "feed never reached {state}: {h}");
        sleep(Duration::from_millis(20)).await;
    }
}

#[derive(Debug)]
struct SseEvent {
    name: String,
    id: u64,
    data: String,
}

/// Read server-sent events until `n` have arrived or `window` elapses.
async fn read_events(addr: &str, n: usize, window: Duration) -> (String, Vec<SseEvent>) {
    let mut conn = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET /events HTTP/1.1\r\nHost: {addr}\r\nAccept: text/event-stream\r\n\r\n");
    conn.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    let mut buf = [0u8; 8192];
    let deadline = Instant::now() + window;
    let mut headers = String::new();
    let mut events = Vec::new();
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match timeout(left, conn.read(&mut buf)).await {
            Ok(Ok(0)) | Err(_) => break,
            Ok(Ok(k)) => raw.extend_from_slice(&buf[..k]),
            Ok(Err(e)) => panic!("{e}"),
        }
        let Some(split) = raw.windows(4).position(|w| w == b"\r\n\r\n") else { continue };
        headers = String::from_utf8_lossy(&raw[..split]).into_owned();
        let (body, _) = dechunk(&raw[split + 4..]);
        events = parse_events(&String::from_utf8(body).unwrap());
        if events.len() >= n {
            break;
        }
    }
    events.truncate(n);
    (headers, events)
}

fn parse_events(text: &str) -> Vec<SseEvent> {
    let mut out = Vec::new();
    for block in text.split("\n\n").filter(|b| b.contains("data:")) {
        if !text.contains(&format!("{block}\n\n")) {
            continue;
        }
        let mut ev = SseEvent { name: String::new(), id: 0, data: String::new() };
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                ev.name = v.trim().to_string();
            } else if let Some(v) = line.strip_prefix("id:") {
                ev.id = v.trim().parse().unwrap();
            } else if let Some(v) = line.strip_prefix("data:") {
                ev.data.push_str(v.trim_start());
            }
        }
        out.push(ev);
    }
    out
}

fn session_for(sim: &Simulation) -> SessionConfig {
    SessionConfig { detection: sim.truth.params, ..Default::default() }
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_ends_with_the_batch_episode_list() {
    let sim = three_episodes();
    let path = feed_file("replay", &sim.feed_jsonl());
    let export = scratch("replay-export");
    let (server, addr) = start(FeedSource::File(path), session_for(&sim), 100.0, Some(export.clone())).await;
    launch(server);
    let started = Instant::now();
    let health = wait_for_state(&addr, "finished").await;
    assert!(started.elapsed() >= Duration::from_millis(1500), "speed 100 over ~190 s of data");
    assert_eq!(health["stats"]["errors"], 0);

    let snap: Snapshot = serde_json::from_value(get_json(&addr, "/state").await).unwrap();
    let batch = detect_hygiene_episodes(&sim.scale_series(), &sim.distance_series(), &sim.truth.params).unwrap();
    assert_eq!(batch.len(), 3);
    assert_eq!(snap.completed_episodes, batch);
    assert!(!snap.episode_active);

    let csv = std::fs::read_to_string(export.join("episodes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(std::fs::read_to_string(export.join("episodes.xes")).unwrap().contains("Hand hygiene"));
}

#[tokio::test(flavor = "multi_thread")]
async fn late_client_first_receives_the_current_snapshot() {
    let sim = three_episodes();
    let path = feed_file("late", &sim.feed_jsonl());
    let (server, addr) = start(FeedSource::File(path), session_for(&sim), f64::INFINITY, None).await;
    launch(server);
    wait_for_state(&addr, "finished").await;
    let state = get_json(&addr, "/state").await;
    let (headers, events) = read_events(&addr, 1, Duration::from_secs(5)).await;
    assert!(headers.to_ascii_lowercase().contains("content-type: text/event-stream"), "{headers}");
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].name, "snapshot");
    assert_eq!(events[0].id, state["seq"].as_u64().unwrap());
    let first: Value = serde_json::from_str(&events[0].data).unwrap();
    assert_eq!(first, state);
    assert_eq!(first["completed_episodes"].as_array().unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn event_stream_is_throttled_and_ordered() {
    let sim = three_episodes();
    let path = feed_file("throttle", &sim.feed_jsonl());
    // about 8 000 lines over roughly four seconds
    let (server, addr) = start(FeedSource::File(path), session_for(&sim), 50.0, None).await;
    launch(server);
    sleep(Duration::from_millis(200)).await;
    let window = Duration::from_millis(1500);
    let (_, events) = read_events(&addr, usize::MAX, window).await;
    assert!(events.len() >= 5, "only {} events", events.len());
    // one immediate event plus at most ten per second
    assert!(events.len() <= 1 + 15, "{} events in 1.5 s", events.len());
    assert!(events.windows(2).all(|w| w[1].id > w[0].id));
    for e in &events {
        let v: Value = serde_json::from_str(&e.data).unwrap();
        assert_eq!(v["schema"], "susbp.live/1");
        assert_eq!(v["seq"].as_u64(), Some(e.id));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_lines_are_counted_and_skipped() {
    let sim = three_episodes();
    let mut lines: Vec<String> = sim.feed_jsonl().lines().map(str::to_string).collect();
    lines.insert(100, "{not json".into());
    lines.insert(2000, r#"{"device_id":"scale-1","timestamp":"2024-06-10T08:00:30Z","channel":"weight","value":1,"unit":"lbs"}"#.into());
    let path = feed_file("malformed", &(lines.join("\n") + "\n"));
    let (server, addr) = start(FeedSource::File(path), session_for(&sim), f64::INFINITY, None).await;
    launch(server);
    let health = wait_for_state(&addr, "finished").await;
    assert_eq!(health["stats"]["errors"], 2);
    assert_eq!(health["stats"]["lines"].as_u64().unwrap() as usize, lines.len());
    assert!(health["stats"]["last_error"].as_str().unwrap().contains("lbs"));
    let state = get_json(&addr, "/state").await;
    assert_eq!(state["completed_episodes"].as_array().unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_feed_file_keeps_service_up() {
    let path = scratch("missing").join("nope.jsonl");
    let (server, addr) = start(FeedSource::File(path), SessionConfig::default(), 1.0, None).await;
    launch(server);
    let health = wait_for_state(&addr, "failed").await;
    assert!(health["error"].as_str().unwrap().contains("cannot open"));
    let state = get_json(&addr, "/state").await;
    assert_eq!(state["fill_level_fraction"], 1.0);
    assert_eq!(state["episode_active"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn occupied_port_is_a_bind_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let config = ServerConfig {
        bind: taken.local_addr().unwrap().to_string(),
        feed: FeedSource::Stdin,
        session: SessionConfig::default(),
        speed: None,
        export_dir: None,
    };
    assert!(matches!(Server::bind(config).await, Err(ServerError::Bind { .. })));
}

#[tokio::test(flavor = "multi_thread")]
async fn tcp_feed_accepts_line_protocol() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (server, addr) = start(FeedSource::Tcp(port), SessionConfig::default(), 1.0, None).await;
    launch(server);
    let mut conn = None;
    for _ in 0..100 {
        if let Ok(c) = TcpStream::connect(("127.0.0.1", port)).await {
            conn = Some(c);
            break;
        }
        sleep(Duration::from_millis(20)).await;
    }
    let mut conn = conn.expect("feed listener up");
    let lines = concat!(
        r#"{"event":"case_start","case_id":"case-01","timestamp":"2024-06-10T08:00:00Z"}"#,
        "\n",
        r#"{"device_id":"button-1","timestamp":"2024-06-10T08:00:01Z","channel":"pressed","value":true,"unit":""}"#,
        "\n",
        r#"{"event":"refill","timestamp":"2024-06-10T08:00:02Z","amount_g":10}"#,
        "\n",
    );
    conn.write_all(lines.as_bytes()).await.unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let state = get_json(&addr, "/state").await;
        if state["seq"] == 3 {
            assert_eq!(state["case_id"], "case-01");
            assert_eq!(state["current_step"]["index"], 1);
            assert_eq!(state["refills"][0]["declared"], true);
            break;
        }
        assert!(Instant::now() < deadline, "{state}");
        sleep(Duration::from_millis(20)).await;
    }
    let health = get_json(&addr, "/healthz").await;
    assert_eq!((health["stats"]["readings"].as_u64(), health["stats"]["events"].as_u64()), (Some(1), Some(2)));
    assert_eq!(health["state"], "running");
}

#[tokio::test(flavor = "multi_thread")]
async fn root_serves_the_dashboard() {
    let path = feed_file("root", "");
    let (server, addr) = start(FeedSource::File(path), SessionConfig::default(), 1.0, None).await;
    launch(server);
    let r = get(&addr, "/").await;
    assert_eq!(r.status, 200);
    assert!(r.headers.to_ascii_lowercase().contains("text/html"));
    assert!(r.body.contains("EventSource(\"/events\")"));
    assert!(r.body.contains("susbp.live/1"));
    assert_eq!(get(&addr, "/nope").await.status, 404);
}
