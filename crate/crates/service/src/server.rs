use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, watch};

use crate::error::{Result, ServiceError};
use crate::live::{LiveSession, Phase, SessionConfig, SessionStatus, FRAME_DIVIDER};
use crate::record::{save, RecordMeta, RecordPaths};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub runs_dir: PathBuf,
    /// Wall-clock speed-up of the session loop; 1 is real time.
    pub time_scale: f64,
}

impl ServiceConfig {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        Self { runs_dir: runs_dir.into(), time_scale: 1.0 }
    }
}

/// Client → server WebSocket messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMessage {
    Input {
        axis: f64,
        #[serde(default)]
        t_client: Option<f64>,
        #[serde(default)]
        device_lost: bool,
    },
    Start,
    Abort,
}

/// Server → client WebSocket messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    Frame {
        t: f64,
        error: f64,
        /// Raw axis value used for this step.
        input: f64,
        clamped: bool,
        /// `t_client` of the latest input applied, for round-trip latency.
        echo_t_client: Option<f64>,
    },
    State {
        phase: String,
        t: f64,
    },
    Error {
        message: String,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct InputSample {
    axis: f64,
    t_client: Option<f64>,
    device_lost: bool,
}

struct SessionHandle {
    live: Mutex<LiveSession>,
    input: watch::Sender<InputSample>,
    events: broadcast::Sender<ServerMessage>,
    controller: AtomicBool,
    looping: AtomicBool,
    finalized: Mutex<Option<(RecordMeta, RecordPaths)>>,
}

impl SessionHandle {
    fn live(&self) -> MutexGuard<'_, LiveSession> {
        self.live.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn announce(&self) {
        let live = self.live();
        let _ = self.events.send(ServerMessage::State { phase: live.label().into(), t: live.sim_time() });
    }
}

/// Session registry shared by every request handler.
#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<Mutex<BTreeMap<String, Arc<SessionHandle>>>>,
    counter: Arc<AtomicU64>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default(), counter: Arc::default() }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn registry(&self) -> MutexGuard<'_, BTreeMap<String, Arc<SessionHandle>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn get(&self, id: &str) -> Result<Arc<SessionHandle>> {
        self.registry().get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn create(&self, config: &SessionConfig) -> Result<SessionStatus> {
        let mut reg = self.registry();
        let id = match &config.id {
            Some(id) if !valid_id(id) => {
                return Err(ServiceError::Config(format!("id: '{id}' must be 1-64 characters of [A-Za-z0-9_-]")))
            }
            Some(id) if reg.contains_key(id) => return Err(ServiceError::Duplicate(id.clone())),
            Some(id) => id.clone(),
            None => loop {
                let id = format!("s{:04}", self.counter.fetch_add(1, Ordering::Relaxed) + 1);
                if !reg.contains_key(&id) {
                    break id;
                }
            },
        };
        let live = LiveSession::new(id.clone(), config)?;
        let status = live.status();
        let handle = SessionHandle {
            live: Mutex::new(live),
            input: watch::Sender::new(InputSample::default()),
            events: broadcast::channel(256).0,
            controller: AtomicBool::new(false),
            looping: AtomicBool::new(false),
            finalized: Mutex::new(None),
        };
        reg.insert(id, Arc::new(handle));
        Ok(status)
    }

    pub fn list(&self) -> Vec<SessionStatus> {
        let handles: Vec<_> = self.registry().values().cloned().collect();
        handles.iter().map(|h| h.live().status()).collect()
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus> {
        Ok(self.get(id)?.live().status())
    }

    /// Starts the next stage and its fixed-rate loop.
    pub fn start(&self, id: &str) -> Result<SessionStatus> {
        let h = self.get(id)?;
        h.live().start()?;
        h.announce();
        self.spawn_loop(h.clone());
        let status = h.live().status();
        Ok(status)
    }

    pub fn abort(&self, id: &str) -> Result<SessionStatus> {
        let h = self.get(id)?;
        h.live().abort()?;
        h.announce();
        if !h.looping.load(Ordering::SeqCst) {
            let _ = self.persist(&h);
        }
        let status = h.live().status();
        Ok(status)
    }

    /// Persists the record and sidecar once; later calls return the same files.
    pub fn finalize(&self, id: &str) -> Result<(RecordMeta, RecordPaths)> {
        let h = self.get(id)?;
        self.persist(&h)
    }

    pub fn record_csv(&self, id: &str) -> Result<String> {
        let h = self.get(id)?;
        self.persist(&h)?;
        let csv = h.live().record().to_csv()?;
        Ok(csv)
    }

    fn persist(&self, h: &SessionHandle) -> Result<(RecordMeta, RecordPaths)> {
        let live = h.live();
        let mut done = h.finalized.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(saved) = done.as_ref() {
            return Ok(saved.clone());
        }
        let meta = live.meta()?;
        let paths = save(&self.config.runs_dir, &meta, live.record())?;
        tracing::info!(session = %meta.session_id, rows = meta.rows, complete = meta.complete, drift_frames = ?meta.max_drift_frames, "record saved");
        *done = Some((meta, paths));
        Ok(done.clone().expect("just stored"))
    }

    fn spawn_loop(&self, h: Arc<SessionHandle>) {
        if h.looping.swap(true, Ordering::SeqCst) {
            return;
        }
        let app = self.clone();
        let name = format!("session-{}", h.live().id());
        std::thread::Builder::new()
            .name(name)
            .spawn(move || {
                session_loop(&h, app.config.time_scale);
                h.looping.store(false, Ordering::SeqCst);
                if h.live().phase() == Phase::Done {
                    if let Err(e) = app.persist(&h) {
                        tracing::warn!(error = %e, "record not saved");
                    }
                }
            })
            .expect("session thread spawns");
    }
}

/// Steps the session on its own clock, catching up on missed steps; input is held between samples.
fn session_loop(h: &SessionHandle, time_scale: f64) {
    let period = h.live().dt() / time_scale;
    let start = Instant::now();
    let mut steps: u64 = 0;
    loop {
        let elapsed = start.elapsed().as_secs_f64() / period;
        let lag_frames = (elapsed - steps as f64).max(0.0) / FRAME_DIVIDER as f64;
        h.live().note_drift(lag_frames);
        let due = elapsed.floor() as u64 + 1;
        while steps < due {
            let input = *h.input.borrow();
            let out = {
                let mut live = h.live();
                if !live.is_live() {
                    return;
                }
                live.step(input.axis, input.device_lost)
            };
            steps += 1;
            let Ok(out) = out else { return };
            if out.frame {
                let _ = h.events.send(ServerMessage::Frame {
                    t: out.t,
                    error: out.error,
                    input: out.input,
                    clamped: out.clamped,
                    echo_t_client: input.t_client,
                });
            }
            if out.transition.is_some() {
                h.announce();
            }
        }
        if !h.live().is_live() {
            return;
        }
        let next = start + Duration::from_secs_f64(steps as f64 * period);
        if let Some(wait) = next.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

async fn create(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<SessionStatus>)> {
    let config: SessionConfig = serde_json::from_slice(&body).map_err(|e| ServiceError::Config(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(app.create(&config)?)))
}

async fn list(State(app): State<AppState>) -> Json<Vec<SessionStatus>> {
    Json(app.list())
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>> {
    Ok(Json(app.status(&id)?))
}

async fn start(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>> {
    Ok(Json(app.start(&id)?))
}

async fn abort(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>> {
    Ok(Json(app.abort(&id)?))
}

#[derive(Serialize)]
struct Finalized {
    meta: RecordMeta,
    paths: RecordPaths,
}

async fn finalize(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Finalized>> {
    let (meta, paths) = app.finalize(&id)?;
    Ok(Json(Finalized { meta, paths }))
}

async fn record(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let csv = app.record_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn ws(State(app): State<AppState>, Path(id): Path<String>, upgrade: WebSocketUpgrade) -> Result<Response> {
    let h = app.get(&id)?;
    if h.controller.swap(true, Ordering::SeqCst) {
        return Err(ServiceError::InvalidState { id, phase: "controlled".into(), action: "a second controller is" });
    }
    Ok(upgrade.on_upgrade(move |socket| controller(socket, app, h)))
}

async fn controller(socket: WebSocket, app: AppState, h: Arc<SessionHandle>) {
    let (mut sink, mut stream) = socket.split();
    let mut events = h.events.subscribe();
    let (local, mut local_rx) = mpsc::unbounded_channel::<ServerMessage>();
    {
        let live = h.live();
        let _ = local.send(ServerMessage::State { phase: live.label().into(), t: live.sim_time() });
    }
    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                m = local_rx.recv() => match m { Some(m) => m, None => break },
                e = events.recv() => match e {
                    Ok(m) => m,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            let text = serde_json::to_string(&msg).expect("server messages serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    let id = h.live().id().to_string();
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let result = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(ClientMessage::Input { axis, t_client, device_lost }) => {
                h.input.send_replace(InputSample { axis, t_client, device_lost });
                Ok(())
            }
            Ok(ClientMessage::Start) => app.start(&id).map(drop),
            Ok(ClientMessage::Abort) => app.abort(&id).map(drop),
            Err(e) => Err(ServiceError::Config(e.to_string())),
        };
        if let Err(e) = result {
            let _ = local.send(ServerMessage::Error { message: e.to_string() });
        }
    }
    h.controller.store(false, Ordering::SeqCst);
    drop(local);
    writer.abort();
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/abort", post(abort))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/record", get(record))
        .route("/sessions/{id}/ws", get(ws))
        .with_state(state)
}

pub async fn bind(addr: &str) -> Result<TcpListener> {
    TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr: addr.to_string(), source })
}

pub async fn serve(listener: TcpListener, state: AppState) -> Result<()> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}
