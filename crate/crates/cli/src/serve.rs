//! HTTP+JSON session service with WebSocket phase pushes.
//!
//! Routes (all JSON):
//!
//! | method | path                          | body                         |
//! |--------|-------------------------------|------------------------------|
//! | GET    | `/api/cells`                  |                              |
//! | POST   | `/api/sessions`               | `{"role", "cell"?}`          |
//! | GET    | `/api/sessions/{id}`          |                              |
//! | GET    | `/api/sessions/{id}/offers`   |                              |
//! | POST   | `/api/sessions/{id}/choice`   | `{"choice": {"approach": i}}` or `{"choice": "opt_out"}` |
//! | POST   | `/api/sessions/{id}/expert`   | `{"kind": "delegate", "objective"?}` or `{"kind": "own", "prices", "small", "big"}` |
//! | GET    | `/api/sessions/{id}/outcome`  |                              |
//! | GET    | `/api/sessions/{id}/events`   | WebSocket upgrade            |
//!
//! Each session sits behind its own lock; resolved sessions are appended
//! to the digest log.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use credence_core::policy::{Choice, ObjectiveRegime};
use credence_core::session::{
    DigestLog, ExpertSubmission, HumanRole, PhaseEvent, Session, SessionConfig,
};
use credence_core::{Institution, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

struct Slot {
    session: Mutex<Session>,
    events: broadcast::Sender<PhaseEvent>,
}

/// Shared service state.
pub struct ServiceState {
    cells: Vec<Arc<SessionConfig>>,
    seed: u64,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    next: AtomicU64,
    digests: Option<DigestLog>,
}

impl ServiceState {
    pub fn new(cells: Vec<SessionConfig>, seed: u64, digests: Option<DigestLog>) -> Self {
        ServiceState {
            cells: cells.into_iter().map(Arc::new).collect(),
            seed,
            sessions: RwLock::new(HashMap::new()),
            next: AtomicU64::new(0),
            digests,
        }
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/cells", get(list_cells))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/offers", get(get_offers))
        .route("/api/sessions/{id}/choice", post(post_choice))
        .route("/api/sessions/{id}/expert", post(post_expert))
        .route("/api/sessions/{id}/outcome", get(get_outcome))
        .route("/api/sessions/{id}/events", get(events))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            kind: "not_found",
            message,
        }
    }

    fn bad_request(message: String) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "bad_request",
            message,
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, kind) = match &e {
            SessionError::OutOfPhase { .. } => (StatusCode::CONFLICT, "out_of_phase"),
            SessionError::WrongRole { .. } => (StatusCode::CONFLICT, "wrong_role"),
            SessionError::Illegal(_) => (StatusCode::UNPROCESSABLE_ENTITY, "illegal"),
            SessionError::Llm(_) => (StatusCode::BAD_GATEWAY, "llm"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.message, "kind": self.kind});
        (self.status, Json(body)).into_response()
    }
}

#[derive(Serialize)]
struct CellInfo {
    label: String,
    institution: Institution,
    transparent: bool,
    objective_regime: ObjectiveRegime,
}

async fn list_cells(State(state): State<Arc<ServiceState>>) -> Json<Vec<CellInfo>> {
    Json(
        state
            .cells
            .iter()
            .map(|c| CellInfo {
                label: c.cell.label.clone(),
                institution: c.cell.institution,
                transparent: c.cell.transparent,
                objective_regime: c.objective_regime,
            })
            .collect(),
    )
}

#[derive(Deserialize)]
struct CreateSession {
    role: HumanRole,
    /// Cell label; defaults to the first configured cell.
    #[serde(default)]
    cell: Option<String>,
}

/// Runs `f` on the session off the async workers (live delegates block),
/// then pushes new phases and persists a freshly resolved session.
async fn with_session<T: Send + 'static>(
    state: Arc<ServiceState>,
    id: String,
    f: impl FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    let slot = state.slot(&id)?;
    tokio::task::spawn_blocking(move || {
        let mut session = slot.session.lock().expect("session lock");
        let seen = session.history().len();
        let was_resolved = session.digest().is_some();
        let result = f(&mut session);
        for event in session.events_since(seen) {
            // no listeners is fine
            let _ = slot.events.send(event);
        }
        if !was_resolved {
            if let (Some(digest), Some(log)) = (session.digest(), &state.digests) {
                log.append(&digest)?;
            }
        }
        Ok(result?)
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
    })?
}

async fn create_session(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let config = match &req.cell {
        None => state.cells.first(),
        Some(label) => state.cells.iter().find(|c| &c.cell.label == label),
    }
    .cloned()
    .ok_or_else(|| ApiError::bad_request(format!("unknown cell {:?}", req.cell)))?;
    let n = state.next.fetch_add(1, Ordering::SeqCst);
    let id = format!("s{n:06}");
    let seed = state.seed;
    let role = req.role;
    let sid = id.clone();
    let session = tokio::task::spawn_blocking(move || Session::new(sid, role, config, seed, n))
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))??;
    let view = session.view();
    let (events, _) = broadcast::channel(16);
    state.sessions.write().expect("session table").insert(
        id,
        Arc::new(Slot {
            session: Mutex::new(session),
            events,
        }),
    );
    Ok((
        StatusCode::CREATED,
        Json(serde_json::to_value(view).expect("view")),
    ))
}

async fn get_session(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(with_session(state, id, |s| Ok(s.view())).await?))
}

async fn get_offers(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(with_session(state, id, |s| s.offers()).await?))
}

#[derive(Deserialize)]
struct ChoiceBody {
    choice: Choice,
}

async fn post_choice(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Json(body): Json<ChoiceBody>,
) -> Result<impl IntoResponse, ApiError> {
    let view = with_session(state, id, move |s| {
        s.choose(body.choice)?;
        Ok(s.view())
    })
    .await?;
    Ok(Json(view))
}

async fn post_expert(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Json(body): Json<ExpertSubmission>,
) -> Result<impl IntoResponse, ApiError> {
    let view = with_session(state, id, move |s| {
        s.submit_expert(body)?;
        Ok(s.view())
    })
    .await?;
    Ok(Json(view))
}

async fn get_outcome(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(with_session(state, id, |s| s.outcome()).await?))
}

async fn events(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    Ok(ws.on_upgrade(move |socket| push_events(socket, slot)))
}

/// Sends every phase so far, then each new one, in order and once.
async fn push_events(mut socket: WebSocket, slot: Arc<Slot>) {
    let mut rx = slot.events.subscribe();
    let backlog = slot.session.lock().expect("session lock").events_since(0);
    let mut next_seq = 0;
    for event in backlog {
        next_seq = event.seq + 1;
        if send(&mut socket, &event).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            event = rx.recv() => match event {
                Ok(event) if event.seq < next_seq => {}
                Ok(event) => {
                    next_seq = event.seq + 1;
                    if send(&mut socket, &event).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    // missed pushes: catch up from the session itself
                    let missed = slot.session.lock().expect("session lock").events_since(next_seq);
                    for event in missed {
                        next_seq = event.seq + 1;
                        if send(&mut socket, &event).await.is_err() {
                            return;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, event: &PhaseEvent) -> Result<(), axum::Error> {
    let text = serde_json::to_string(event).expect("event serializes");
    socket.send(Message::Text(text.into())).await
}

/// Binds and serves until interrupted.
pub async fn serve(state: Arc<ServiceState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
