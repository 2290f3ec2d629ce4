//! Feed sources and the single writer that applies them to a session.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use serde::Serialize;
use susbp_core::monitor::{parse_feed_line, replay_with, FeedItem, FeedStats, LiveSession, MonitorError, Snapshot};
use tokio::sync::watch;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeedSource {
    File(PathBuf),
    Stdin,
    Tcp(u16),
}

impl FromStr for FeedSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "stdin" || s == "-" {
            return Ok(FeedSource::Stdin);
        }
        if let Some(port) = s.strip_prefix("tcp:") {
            return port.parse().map(FeedSource::Tcp).map_err(|_| format!("invalid tcp port {port:?}"));
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        if path.is_empty() {
            return Err("empty feed path".into());
        }
        Ok(FeedSource::File(PathBuf::from(path)))
    }
}

impl std::fmt::Display for FeedSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeedSource::File(p) => write!(f, "file:{}", p.display()),
            FeedSource::Stdin => f.write_str("stdin"),
            FeedSource::Tcp(port) => write!(f, "tcp:{port}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedState {
    Running,
    Finished,
    Failed,
}

/// What `/healthz` reports.
#[derive(Debug, Clone, Serialize)]
pub struct FeedHealth {
    pub source: String,
    pub state: FeedState,
    pub stats: FeedStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seq: u64,
}

pub type SharedHealth = Arc<Mutex<FeedHealth>>;
pub type SnapshotSender = Arc<watch::Sender<Arc<Snapshot>>>;

/// Files written when a finite feed ends.
#[derive(Debug, Clone)]
pub struct ExportTarget {
    pub dir: PathBuf,
    pub hygiene_activity: String,
}

/// Owns the session. Every state change is published as a fresh snapshot;
/// readers never touch the session itself.
pub struct Writer {
    session: LiveSession,
    snapshots: SnapshotSender,
    health: SharedHealth,
}

impl Writer {
    pub fn new(session: LiveSession, snapshots: SnapshotSender, health: SharedHealth) -> Self {
        Self { session, snapshots, health }
    }

    pub fn apply(&mut self, parsed: Result<FeedItem, MonitorError>) {
        let before = self.session.seq();
        self.session.apply_parsed(parsed);
        self.publish(before);
    }

    fn publish(&mut self, before: u64) {
        if self.session.seq() != before {
            self.snapshots.send_replace(Arc::new(self.session.snapshot()));
        }
        let mut h = self.health.lock().expect("health lock");
        h.stats = self.session.stats().clone();
        h.seq = self.session.seq();
    }

    pub fn finish(&mut self, export: Option<&ExportTarget>) {
        let before = self.session.seq();
        self.session.finish();
        self.publish(before);
        let mut error = None;
        if let Some(target) = export {
            if let Err(e) = self.export(target) {
                error = Some(format!("episode export failed: {e}"));
            }
        }
        let mut h = self.health.lock().expect("health lock");
        h.state = FeedState::Finished;
        if error.is_some() {
            h.error = error;
        }
    }

    fn export(&self, target: &ExportTarget) -> std::io::Result<()> {
        use susbp_core::monitor::{episodes_csv, episodes_xes};
        std::fs::create_dir_all(&target.dir)?;
        let episodes = self.session.completed();
        let case = &self.session.config().session_id;
        std::fs::write(target.dir.join("episodes.xes"), episodes_xes(episodes, case, &target.hygiene_activity))?;
        std::fs::write(target.dir.join("episodes.csv"), episodes_csv(episodes))
    }

    pub fn session(&self) -> &LiveSession {
        &self.session
    }
}

fn fail(health: &SharedHealth, error: String) {
    let mut h = health.lock().expect("health lock");
    h.state = FeedState::Failed;
    h.error = Some(error);
}

/// Start consuming `source` on background threads. Problems opening the
/// source end up in the health record; the HTTP side keeps serving.
pub fn spawn_feed(
    source: FeedSource,
    speed: f64,
    listen_host: std::net::IpAddr,
    mut writer: Writer,
    export: Option<ExportTarget>,
) -> thread::JoinHandle<()> {
    let health = writer.health.clone();
    thread::spawn(move || match source {
        FeedSource::File(path) => match File::open(&path) {
            Ok(file) => {
                let registry = writer.session.registry().clone();
                let result = replay_with(BufReader::new(file), speed, &registry, &mut |line| writer.apply(line.parsed));
                match result {
                    Ok(_) => writer.finish(export.as_ref()),
                    Err(e) => fail(&health, format!("reading {}: {e}", path.display())),
                }
            }
            Err(e) => fail(&health, format!("cannot open {}: {e}", path.display())),
        },
        FeedSource::Stdin => {
            let registry = writer.session.registry().clone();
            let stdin = std::io::stdin();
            let result = replay_with(stdin.lock(), f64::INFINITY, &registry, &mut |line| writer.apply(line.parsed));
            match result {
                Ok(_) => writer.finish(export.as_ref()),
                Err(e) => fail(&health, format!("reading stdin: {e}")),
            }
        }
        FeedSource::Tcp(port) => {
            let addr = SocketAddr::new(listen_host, port);
            let listener = match TcpListener::bind(addr) {
                Ok(l) => l,
                Err(e) => return fail(&health, format!("cannot listen on {addr}: {e}")),
            };
            let (tx, rx) = mpsc::channel::<String>();
            thread::spawn(move || {
                for conn in listener.incoming().flatten() {
                    let tx = tx.clone();
                    thread::spawn(move || {
                        for line in BufReader::new(conn).lines() {
                            let Ok(line) = line else { break };
                            if tx.send(line).is_err() {
                                break;
                            }
                        }
                    });
                }
            });
            let registry = writer.session.registry().clone();
            let mut n = 0usize;
            for line in rx {
                n += 1;
                let parsed = if line.trim().is_empty() { Ok(FeedItem::Readings(Vec::new())) } else { parse_feed_line(&line, n, &registry) };
                writer.apply(parsed);
            }
        }
    })
}
