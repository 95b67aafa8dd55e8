//! Operator service: exposes live runs over HTTP and a WebSocket stream.
//!
//! | route | |
//! |---|---|
//! | `GET /runs` | ids of registered runs |
//! | `GET /runs/<id>/snapshot` | current [`SwarmSnapshot`] |
//! | `POST /runs/<id>/inform` | operator text, answered with an [`InformReply`] |
//! | `POST /runs/<id>/instruct` | operator text, answered with an [`InstructReply`] or an error |
//! | `POST /runs/<id>/pause`, `/resume` | snapshot after the change |
//! | `GET /runs/<id>/stream` | WebSocket of [`StreamEvent`]s |
//!
//! Operator text is the raw request body, or `{"text": ...}` when sent as JSON.

mod run;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;
use tracing::debug;

use swarmchat_core::operator::{InformReply, InstructReply, OperatorError, OperatorKind, SwarmSnapshot};

pub use run::{ErrorBody, RunError, RunHandle, RunOptions, StreamEvent};

#[derive(Debug, Clone, Default)]
pub struct Registry {
    runs: Arc<RwLock<BTreeMap<String, RunHandle>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, handle: RunHandle) {
        self.runs
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(handle.id().to_string(), handle);
    }

    pub fn get(&self, id: &str) -> Option<RunHandle> {
        self.runs.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        self.runs.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }
}

pub fn router(registry: Registry) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/:id/snapshot", get(get_snapshot))
        .route("/runs/:id/inform", post(post_inform))
        .route("/runs/:id/instruct", post(post_instruct))
        .route("/runs/:id/pause", post(post_pause))
        .route("/runs/:id/resume", post(post_resume))
        .route("/runs/:id/stream", get(stream))
        .with_state(registry)
}

pub async fn serve(listener: tokio::net::TcpListener, registry: Registry) -> std::io::Result<()> {
    axum::serve(listener, router(registry)).await
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let status = match &e {
            RunError::Stopped => StatusCode::GONE,
            RunError::Operator(OperatorError::EmptyText) => StatusCode::BAD_REQUEST,
            RunError::Operator(OperatorError::NoDirective) => StatusCode::UNPROCESSABLE_ENTITY,
            RunError::Operator(OperatorError::NoResponse(_)) => StatusCode::BAD_GATEWAY,
        };
        ApiError(status, e.to_string())
    }
}

fn lookup(registry: &Registry, id: &str) -> Result<RunHandle, ApiError> {
    registry
        .get(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no run '{id}'")))
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

fn operator_text(headers: &HeaderMap, body: String) -> Result<String, ApiError> {
    let json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if json {
        serde_json::from_str::<TextBody>(&body)
            .map(|b| b.text)
            .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("expected {{\"text\": ...}}: {e}")))
    } else {
        Ok(body)
    }
}

async fn list_runs(State(registry): State<Registry>) -> Json<Vec<String>> {
    Json(registry.ids())
}

async fn get_snapshot(State(registry): State<Registry>, Path(id): Path<String>) -> Result<Json<SwarmSnapshot>, ApiError> {
    Ok(Json(lookup(&registry, &id)?.snapshot()))
}

async fn post_inform(
    State(registry): State<Registry>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: String,
) -> Result<Json<InformReply>, ApiError> {
    let run = lookup(&registry, &id)?;
    Ok(Json(run.inform(&operator_text(&headers, body)?).await?))
}

async fn post_instruct(
    State(registry): State<Registry>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: String,
) -> Result<Json<InstructReply>, ApiError> {
    let run = lookup(&registry, &id)?;
    Ok(Json(run.instruct(&operator_text(&headers, body)?).await?))
}

async fn post_pause(State(registry): State<Registry>, Path(id): Path<String>) -> Result<Json<SwarmSnapshot>, ApiError> {
    Ok(Json(lookup(&registry, &id)?.set_paused(true).await?))
}

async fn post_resume(State(registry): State<Registry>, Path(id): Path<String>) -> Result<Json<SwarmSnapshot>, ApiError> {
    Ok(Json(lookup(&registry, &id)?.set_paused(false).await?))
}

async fn stream(
    State(registry): State<Registry>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let run = lookup(&registry, &id)?;
    Ok(ws.on_upgrade(move |socket| pump(socket, run)))
}

/// Operator message sent over the socket.
#[derive(Deserialize)]
struct SocketCommand {
    kind: OperatorKind,
    text: String,
}

async fn send(socket: &mut WebSocket, event: &StreamEvent) -> bool {
    let text = serde_json::to_string(event).expect("events serialize");
    socket.send(Message::Text(text)).await.is_ok()
}

async fn answer(run: RunHandle, text: &str) -> StreamEvent {
    let cmd = match serde_json::from_str::<SocketCommand>(text) {
        Ok(c) => c,
        Err(e) => return StreamEvent::Error(ErrorBody { error: format!("bad command: {e}") }),
    };
    let reply = match cmd.kind {
        OperatorKind::Inform => run.inform(&cmd.text).await.map(StreamEvent::InformReply),
        OperatorKind::Instruct => run.instruct(&cmd.text).await.map(StreamEvent::InstructReply),
    };
    reply.unwrap_or_else(|e| StreamEvent::Error(ErrorBody { error: e.to_string() }))
}

async fn pump(mut socket: WebSocket, run: RunHandle) {
    let mut events = run.subscribe();
    if !send(&mut socket, &StreamEvent::Snapshot(run.snapshot())).await {
        return;
    }
    let (reply_tx, mut replies) = tokio::sync::mpsc::unbounded_channel();
    loop {
        tokio::select! {
            biased;
            event = events.recv() => match event {
                Ok(e) => {
                    if !send(&mut socket, &e).await {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => debug!(skipped = n, "stream subscriber lagging"),
                Err(RecvError::Closed) => break,
            },
            Some(reply) = replies.recv() => {
                if !send(&mut socket, &reply).await {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let (run, tx) = (run.clone(), reply_tx.clone());
                    tokio::spawn(async move {
                        let _ = tx.send(answer(run, &text).await);
                    });
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
