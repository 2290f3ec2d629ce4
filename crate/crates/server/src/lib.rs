//! HTTP surface of a live monitoring session.
//!
//! Routes: `GET /state` returns the latest snapshot, `GET /events` streams
//! snapshots as server-sent events (at most ten per second, starting with
//! the current one), `GET /healthz` reports feed counters and `GET /`
//! serves the dashboard page.

pub mod feed;

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::header;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use futures::stream::{self, Stream};
use susbp_core::monitor::{LiveSession, MonitorError, SessionConfig, Snapshot};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::time::Instant;

use feed::{spawn_feed, SharedHealth, SnapshotSender, Writer};
pub use feed::{ExportTarget, FeedHealth, FeedSource, FeedState};

/// Minimum spacing of pushed snapshots on one event stream.
pub const PUSH_INTERVAL: Duration = Duration::from_millis(100);

const DASHBOARD: &str = include_str!("../assets/index.html");

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] MonitorError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub feed: FeedSource,
    pub session: SessionConfig,
    /// Overrides the session's replay speed when set.
    pub speed: Option<f64>,
    /// Directory for the episode log written when a finite feed ends.
    pub export_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    snapshots: SnapshotSender,
    health: SharedHealth,
}

pub struct Server {
    listener: TcpListener,
    app: Router,
    state: AppState,
}

impl Server {
    /// Bind the HTTP listener and start the feed.
    pub async fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        let mut session_config = config.session.clone();
        if let Some(speed) = config.speed {
            session_config.replay_speed = speed;
        }
        let hygiene_activity = session_config.normative.hygiene_activity.clone();
        let speed = session_config.replay_speed;
        let session = LiveSession::new(session_config)?;
        let listener = TcpListener::bind(&config.bind).await.map_err(|source| ServerError::Bind { addr: config.bind.clone(), source })?;
        let local = listener.local_addr()?;

        let (tx, _) = watch::channel(Arc::new(session.snapshot()));
        let snapshots = Arc::new(tx);
        let health = Arc::new(Mutex::new(FeedHealth {
            source: config.feed.to_string(),
            state: FeedState::Running,
            stats: session.stats().clone(),
            error: None,
            seq: session.seq(),
        }));
        let state = AppState { snapshots: snapshots.clone(), health: health.clone() };
        let writer = Writer::new(session, snapshots, health);
        let export = config.export_dir.map(|dir| ExportTarget { dir, hygiene_activity });
        spawn_feed(config.feed, speed, local.ip(), writer, export);
        Ok(Self { listener, app: router(state.clone()), state })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn health(&self) -> FeedHealth {
        self.state.health.lock().expect("health lock").clone()
    }

    pub async fn run(self) -> Result<(), ServerError> {
        axum::serve(self.listener, self.app).await?;
        Ok(())
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(dashboard))
        .route("/state", get(current_state))
        .route("/events", get(events))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn dashboard() -> impl IntoResponse {
    ([(header::CACHE_CONTROL, "no-cache")], Html(DASHBOARD))
}

async fn current_state(State(state): State<AppState>) -> Json<Snapshot> {
    Json(Snapshot::clone(&state.snapshots.borrow()))
}

async fn healthz(State(state): State<AppState>) -> Json<FeedHealth> {
    Json(state.health.lock().expect("health lock").clone())
}

fn snapshot_event(s: &Snapshot) -> Event {
    Event::default().event("snapshot").id(s.seq.to_string()).data(serde_json::to_string(s).expect("snapshot serializes"))
}

/// Current snapshot first, then the latest one after each change, never
/// faster than [`PUSH_INTERVAL`]. Intermediate states are skipped; the
/// sequence number shows how many.
fn snapshot_stream(mut rx: watch::Receiver<Arc<Snapshot>>) -> impl Stream<Item = Result<Event, Infallible>> {
    let first = rx.borrow_and_update().clone();
    stream::unfold((rx, Some(first), None::<Instant>), |(mut rx, pending, last)| async move {
        let snap = match pending {
            Some(s) => s,
            None => {
                rx.changed().await.ok()?;
                if let Some(last) = last {
                    tokio::time::sleep_until(last + PUSH_INTERVAL).await;
                }
                rx.borrow_and_update().clone()
            }
        };
        Some((Ok(snapshot_event(&snap)), (rx, None, Some(Instant::now()))))
    })
}

async fn events(State(state): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    Sse::new(snapshot_stream(state.snapshots.subscribe())).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}
