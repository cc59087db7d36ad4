//! HTTP and WebSocket face of the registry.
//!
//! Routes:
//! - `GET /stories`
//! - `GET /sessions`, `POST /sessions` `{story_id, mode, seed?, realtime?}`
//! - `GET /sessions/{id}`, `POST /sessions/{id}/stop`
//! - `POST /sessions/{id}/wizard-action` `{action, request_id?}`
//! - `GET /sessions/{id}/log`
//! - `GET /sessions/{id}/stream` (WebSocket)
//!
//! Stream messages are JSON objects with a `type` field: `hello` (the
//! descriptor on connect), `telemetry` (frame metrics, throttled),
//! `segment_ended`, `action_request`, `action_chosen`, `reward`,
//! `bolt_state`, `servo`, `log`, and a final `status`. Bus envelopes keep
//! their `seq` and `timestamp`. A pending wizard request is repeated right
//! after `hello`, so clients should dedupe action requests by `request_id`.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use storybolt_core::agent::ActionId;
use storybolt_core::bus::{Envelope, Topic};
use storybolt_core::session::{Mode, WizardReject};
use tokio::sync::mpsc;

use crate::sessions::{LiveSession, Registry, StartError, StartRequest};

pub const DEFAULT_TELEMETRY_HZ: f64 = 5.0;

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    /// Frame-metric messages per second of session time on each stream.
    pub telemetry_hz: f64,
}

impl AppState {
    pub fn new(registry: Arc<Registry>) -> Self {
        AppState { registry, telemetry_hz: DEFAULT_TELEMETRY_HZ }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/stories", get(list_stories))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/stop", post(stop_session))
        .route("/sessions/{id}/wizard-action", post(wizard_action))
        .route("/sessions/{id}/log", get(session_log))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

fn find(state: &AppState, id: &str) -> ApiResult<Arc<LiveSession>> {
    state
        .registry
        .get(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    story_id: String,
    mode: Mode,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    realtime: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WizardAction {
    action: ActionId,
    #[serde(default)]
    request_id: Option<u64>,
}

async fn list_stories(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.registry.stories())
}

async fn list_sessions(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.registry.list())
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_body(&body)?;
    let session = state
        .registry
        .start(StartRequest {
            story_id: req.story_id,
            mode: req.mode,
            seed: req.seed,
            realtime: req.realtime,
            source: None,
        })
        .map_err(|e| match e {
            StartError::UnknownStory(_) => ApiError(StatusCode::NOT_FOUND, e.to_string()),
            StartError::Setup(_) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        })?;
    Ok((StatusCode::CREATED, Json(session.descriptor())))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(find(&state, &id)?.descriptor()))
}

async fn stop_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let session = find(&state, &id)?;
    session.stop();
    Ok(Json(session.descriptor()))
}

async fn wizard_action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let session = find(&state, &id)?;
    let req: WizardAction = parse_body(&body)?;
    if session.mode != Mode::Wizard {
        return Err(ApiError(StatusCode::CONFLICT, format!("session {id} is in {} mode", session.mode)));
    }
    match session.answer(req.request_id, req.action) {
        Ok(request_id) => Ok(Json(json!({ "request_id": request_id, "action": req.action }))),
        Err(e @ (WizardReject::NoPending
        | WizardReject::AlreadyAnswered(_)
        | WizardReject::WrongRequest { .. }
        | WizardReject::Closed)) => Err(ApiError(StatusCode::CONFLICT, e.to_string())),
    }
}

async fn session_log(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(find(&state, &id)?.log()))
}

async fn stream(
    ws: WebSocketUpgrade,
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let session = find(&state, &id)?;
    let hz = state.telemetry_hz;
    Ok(ws.on_upgrade(move |socket| pump(socket, session, hz)))
}

/// Passes frame metrics at most `hz` times per second of session time;
/// every other topic passes untouched.
#[derive(Debug, Clone)]
pub struct Throttle {
    interval: f64,
    last: Option<f64>,
}

impl Throttle {
    pub fn new(hz: f64) -> Self {
        Throttle { interval: if hz > 0.0 { 1.0 / hz } else { 0.0 }, last: None }
    }

    pub fn admit(&mut self, e: &Envelope) -> bool {
        if e.topic() != Topic::Frame {
            return true;
        }
        match self.last {
            Some(t) if e.timestamp - t < self.interval - 1e-9 => false,
            _ => {
                self.last = Some(e.timestamp);
                true
            }
        }
    }
}

/// The stream message for one bus envelope.
pub fn stream_message(e: &Envelope) -> Value {
    let kind = match e.topic() {
        Topic::Frame => "telemetry",
        t => t.name(),
    };
    let mut out = Map::new();
    out.insert("type".into(), kind.into());
    out.insert("seq".into(), e.seq.into());
    out.insert("timestamp".into(), e.timestamp.into());
    if let Ok(Value::Object(mut tagged)) = serde_json::to_value(&e.payload) {
        if let Some(Value::Object(fields)) = tagged.remove("payload") {
            out.extend(fields);
        }
    }
    Value::Object(out)
}

async fn send_json(socket: &mut WebSocket, v: &Value) -> bool {
    socket.send(Message::Text(v.to_string().into())).await.is_ok()
}

async fn pump(mut socket: WebSocket, session: Arc<LiveSession>, hz: f64) {
    // subscribe before the snapshot so nothing falls between them
    let sub = session.bus.subscribe_many(&Topic::ALL, 4096);
    let descriptor = session.descriptor();
    if !send_json(&mut socket, &json!({ "type": "hello", "session": descriptor })).await {
        return;
    }
    if let Some(req) = &descriptor.pending_request {
        let mut msg = serde_json::to_value(req).unwrap_or_default();
        msg["type"] = "action_request".into();
        if !send_json(&mut socket, &msg).await {
            return;
        }
    }

    let (tx, mut rx) = mpsc::channel::<Envelope>(1024);
    let watched = Arc::clone(&session);
    let forwarder = tokio::task::spawn_blocking(move || loop {
        match sub.recv_timeout(Duration::from_millis(50)) {
            Some(e) => {
                if tx.blocking_send(e).is_err() {
                    break;
                }
            }
            None => {
                let finished = sub.is_closed() || watched.status().is_terminal();
                if (finished && sub.is_empty()) || tx.is_closed() {
                    break;
                }
            }
        }
    });

    let mut throttle = Throttle::new(hz);
    let mut ended = false;
    loop {
        tokio::select! {
            next = rx.recv() => match next {
                Some(e) => {
                    if throttle.admit(&e) && !send_json(&mut socket, &stream_message(&e)).await {
                        break;
                    }
                }
                None => {
                    ended = true;
                    break;
                }
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    drop(rx);
    let _ = forwarder.await;
    if ended {
        let _ = send_json(&mut socket, &json!({ "type": "status", "session": session.descriptor() })).await;
        let _ = socket.send(Message::Close(None)).await;
    }
}
