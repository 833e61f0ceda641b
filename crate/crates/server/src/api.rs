//! The control-plane HTTP API. One thread owns the simulation; handlers talk
//! to it through a command queue and read events from a broadcast channel.

use std::convert::Infallible;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use teastore_core::adaptation::MetricsWindow;
use teastore_core::scenarios::{builtin_names, builtin_scenario, run_scenario};
use teastore_core::simnet::{FaultId, FaultSpec, SimError, SimTime};
use teastore_core::variability::{Configuration, PartialConfiguration};
use tokio::sync::{broadcast, oneshot};

use crate::live::{LiveSim, LiveState, Pace, Reconfigured, Refused};

/// Events buffered per subscriber before it is dropped.
pub const SUBSCRIBER_BUFFER: usize = 1024;
/// Wall-clock tick of the realtime pacer.
const REALTIME_TICK: Duration = Duration::from_millis(20);
/// Simulated time advanced per fast-forward iteration.
const FAST_FORWARD_CHUNK_MS: SimTime = 200;

#[derive(Debug, Clone)]
pub struct SseRecord {
    pub kind: String,
    pub data: String,
}

enum Command {
    Config(oneshot::Sender<Configuration>),
    State(oneshot::Sender<LiveState>),
    Metrics(oneshot::Sender<MetricsWindow>),
    Reconfigure(PartialConfiguration, oneshot::Sender<Result<Reconfigured, Refused>>),
    InjectFault(FaultSpec, oneshot::Sender<Result<FaultId, SimError>>),
    ClearFault(FaultId, oneshot::Sender<Result<(), SimError>>),
    Pace(Pace, oneshot::Sender<LiveState>),
}

#[derive(Clone)]
pub struct AppState {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Arc<SseRecord>>,
}

struct Pacer {
    pace: Pace,
    anchor: (Instant, SimTime),
}

impl Pacer {
    fn set(&mut self, pace: Pace, now: SimTime) {
        self.pace = pace;
        self.anchor = (Instant::now(), now);
    }
}

fn publish(live: &mut LiveSim, events: &broadcast::Sender<Arc<SseRecord>>) {
    for r in live.take_new_records() {
        let data = r.to_json_line();
        // No subscribers is not an error.
        let _ = events.send(Arc::new(SseRecord { kind: r.kind.clone(), data }));
    }
}

fn run_loop(mut live: LiveSim, commands: mpsc::Receiver<Command>, events: broadcast::Sender<Arc<SseRecord>>) {
    let mut pacer = Pacer { pace: Pace::Paused, anchor: (Instant::now(), 0) };
    loop {
        let cmd = match pacer.pace {
            Pace::Paused | Pace::Step { .. } => match commands.recv() {
                Ok(c) => Some(c),
                Err(_) => return,
            },
            Pace::Realtime { .. } => match commands.recv_timeout(REALTIME_TICK) {
                Ok(c) => Some(c),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => return,
            },
            Pace::FastForward => match commands.try_recv() {
                Ok(c) => Some(c),
                Err(mpsc::TryRecvError::Empty) => None,
                Err(mpsc::TryRecvError::Disconnected) => return,
            },
        };
        if let Some(cmd) = cmd {
            handle(&mut live, &mut pacer, cmd);
        }
        match pacer.pace {
            Pace::Realtime { factor } => {
                let (wall, sim) = pacer.anchor;
                let target = sim + (wall.elapsed().as_secs_f64() * 1000.0 * factor.max(0.0)) as SimTime;
                live.advance_to(target);
            }
            Pace::FastForward => live.advance_by(FAST_FORWARD_CHUNK_MS),
            Pace::Paused | Pace::Step { .. } => {}
        }
        publish(&mut live, &events);
    }
}

fn handle(live: &mut LiveSim, pacer: &mut Pacer, cmd: Command) {
    // A dropped reply means the client went away; nothing to do about it.
    match cmd {
        Command::Config(tx) => {
            let _ = tx.send(live.config());
        }
        Command::State(tx) => {
            let _ = tx.send(live.state(pacer.pace));
        }
        Command::Metrics(tx) => {
            let _ = tx.send(live.metrics());
        }
        Command::Reconfigure(request, tx) => {
            let _ = tx.send(live.reconfigure(request));
        }
        Command::InjectFault(spec, tx) => {
            let _ = tx.send(live.inject_fault(spec));
        }
        Command::ClearFault(id, tx) => {
            let _ = tx.send(live.clear_fault(id));
        }
        Command::Pace(pace, tx) => {
            if let Pace::Step { ms } = pace {
                live.advance_by(ms);
            }
            pacer.set(pace, live.now());
            let _ = tx.send(live.state(pacer.pace));
        }
    }
}

/// Starts the simulation thread and returns the handler state.
pub fn start(live: LiveSim) -> AppState {
    let (commands, rx) = mpsc::channel();
    let (events, _) = broadcast::channel(SUBSCRIBER_BUFFER);
    let tx = events.clone();
    thread::Builder::new()
        .name("simulation".into())
        .spawn(move || run_loop(live, rx, tx))
        .expect("spawn simulation thread");
    AppState { commands, events }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/config", get(get_config))
        .route("/api/state", get(get_state))
        .route("/api/metrics", get(get_metrics))
        .route("/api/events", get(get_events))
        .route("/api/reconfigure", post(post_reconfigure))
        .route("/api/faults", post(post_fault))
        .route("/api/faults/{id}", delete(delete_fault))
        .route("/api/scenarios", get(get_scenarios))
        .route("/api/scenarios/{name}/run", post(post_scenario_run))
        .route("/api/sim/pace", post(post_pace))
        .with_state(state)
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn unavailable() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped")
}

async fn ask<T>(state: &AppState, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, Response> {
    let (tx, rx) = oneshot::channel();
    state.commands.send(make(tx)).map_err(|_| unavailable())?;
    rx.await.map_err(|_| unavailable())
}

#[allow(clippy::result_large_err)]
fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

async fn get_config(State(s): State<AppState>) -> Result<Json<Configuration>, Response> {
    ask(&s, Command::Config).await.map(Json)
}

async fn get_state(State(s): State<AppState>) -> Result<Json<LiveState>, Response> {
    ask(&s, Command::State).await.map(Json)
}

async fn get_metrics(State(s): State<AppState>) -> Result<Json<MetricsWindow>, Response> {
    ask(&s, Command::Metrics).await.map(Json)
}

async fn get_events(State(s): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = s.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        // A lagging subscriber has lost records; close its stream.
        let r = rx.recv().await.ok()?;
        Some((Ok(Event::default().event(r.kind.clone()).data(r.data.clone())), rx))
    });
    Sse::new(stream)
}

async fn post_reconfigure(State(s): State<AppState>, body: Bytes) -> Result<Json<Reconfigured>, Response> {
    let request: PartialConfiguration = parse(&body)?;
    match ask(&s, |tx| Command::Reconfigure(request, tx)).await? {
        Ok(r) => Ok(Json(r)),
        Err(refused) => Err((
            StatusCode::CONFLICT,
            Json(json!({ "error": refused.to_string(), "violations": refused.violations })),
        )
            .into_response()),
    }
}

#[derive(Serialize)]
struct FaultCreated {
    id: FaultId,
}

async fn post_fault(State(s): State<AppState>, body: Bytes) -> Result<Json<FaultCreated>, Response> {
    let spec: FaultSpec = parse(&body)?;
    match ask(&s, |tx| Command::InjectFault(spec, tx)).await? {
        Ok(id) => Ok(Json(FaultCreated { id })),
        Err(e) => Err(error(StatusCode::BAD_REQUEST, e)),
    }
}

async fn delete_fault(State(s): State<AppState>, Path(id): Path<u64>) -> Result<StatusCode, Response> {
    match ask(&s, |tx| Command::ClearFault(FaultId(id), tx)).await? {
        Ok(()) => Ok(StatusCode::NO_CONTENT),
        Err(e) => Err(error(StatusCode::NOT_FOUND, e)),
    }
}

#[derive(Serialize)]
struct ScenarioInfo {
    name: &'static str,
    description: String,
    duration_ms: SimTime,
    seed: u64,
    initial_config: Configuration,
}

async fn get_scenarios() -> Json<Vec<ScenarioInfo>> {
    Json(
        builtin_names()
            .iter()
            .map(|&name| {
                let s = builtin_scenario(name).expect("listed builtin exists");
                ScenarioInfo {
                    name,
                    description: s.description,
                    duration_ms: s.duration_ms,
                    seed: s.seed,
                    initial_config: s.initial_config,
                }
            })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    seed: Option<u64>,
}

async fn post_scenario_run(Path(name): Path<String>, body: Bytes) -> Result<Response, Response> {
    let Some(script) = builtin_scenario(&name) else {
        return Err(error(StatusCode::NOT_FOUND, format!("unknown scenario `{name}`")));
    };
    let req: RunRequest = if body.iter().all(u8::is_ascii_whitespace) { RunRequest { seed: None } } else { parse(&body)? };
    let seed = req.seed.unwrap_or(script.seed);
    let report = tokio::task::spawn_blocking(move || run_scenario(&script, seed))
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))?
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))?
        .report;
    Ok(([(header::CONTENT_TYPE, "application/json")], report.to_json()).into_response())
}

async fn post_pace(State(s): State<AppState>, body: Bytes) -> Result<Json<LiveState>, Response> {
    let pace: Pace = parse(&body)?;
    match pace {
        Pace::Realtime { factor } if !(factor.is_finite() && factor > 0.0) => {
            return Err(error(StatusCode::BAD_REQUEST, "realtime factor must be positive"));
        }
        _ => {}
    }
    ask(&s, |tx| Command::Pace(pace, tx)).await.map(Json)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(live: LiveSim, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(start(live))).await
}
