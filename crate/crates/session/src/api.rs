//! HTTP routes.
//!
//! | method | path                      | body                  |
//! |--------|---------------------------|-----------------------|
//! | POST   | `/sessions`               | [`CreateRequest`]     |
//! | GET    | `/sessions`               |                       |
//! | GET    | `/sessions/{id}`          |                       |
//! | GET    | `/sessions/{id}/briefing` |                       |
//! | POST   | `/sessions/{id}/action`   | `{"action": 0 \| 1}`  |
//! | POST   | `/sessions/{id}/feedback` | `{"value": 0..=100}`  |
//! | GET    | `/sessions/{id}/export`   |                       |
//! | GET    | `/sessions/{id}/events`   | server-sent events    |
//! | POST   | `/replay`                 | an exported log       |
//!
//! Errors are `{"error": code, "message": text}` plus `fields` for
//! validation failures.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, Mutex, RwLock};
use valign_core::{replay, Action, LogError, MissionLog, MissionMetrics};

use crate::model::{CreateRequest, Event, FieldError, Phase, Session, SessionError, Status};
use crate::store::{Appender, Store, StoreError, Stored};

/// Milliseconds since the Unix epoch.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Replay(#[from] LogError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Session(e) => match e {
                SessionError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
                SessionError::Finished => (StatusCode::CONFLICT, "finished"),
                SessionError::NothingPlayed => (StatusCode::CONFLICT, "nothing_played"),
                SessionError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
                SessionError::Inconsistent(_) | SessionError::Core(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            },
            ApiError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            ApiError::Replay(_) => (StatusCode::BAD_REQUEST, "bad_log"),
        };
        let mut body = json!({ "error": code, "message": self.to_string() });
        if let ApiError::Session(SessionError::Invalid(fields)) = &self {
            body["fields"] = json!(fields);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn invalid(field: &str, message: impl Into<String>) -> ApiError {
    SessionError::Invalid(vec![FieldError::new(field, message)]).into()
}

/// A status snapshot pushed to event subscribers.
#[derive(Debug, Clone, Serialize)]
struct Notice {
    seq: u64,
    status: Status,
}

/// A loaded session with its journal.
struct Live {
    session: Session,
    log: Appender,
    tx: broadcast::Sender<Notice>,
}

impl Live {
    fn new(session: Session, log: Appender) -> Self {
        Self {
            session,
            log,
            tx: broadcast::channel(64).0,
        }
    }

    fn notice(&self, now: u64) -> Notice {
        Notice {
            seq: self.log.records_written(),
            status: self.session.status(now),
        }
    }

    /// Persists an event, then applies it.
    fn commit(&mut self, event: &Event, now: u64) -> ApiResult<()> {
        self.log.append(event)?;
        self.session.apply(event)?;
        let _ = self.tx.send(self.notice(now));
        Ok(())
    }

    fn expire(&mut self, now: u64) -> ApiResult<()> {
        if let Some(e) = self.session.tick(now) {
            self.commit(&e, now)?;
        }
        Ok(())
    }
}

struct Inner {
    store: Store,
    sessions: RwLock<HashMap<String, Arc<Mutex<Live>>>>,
    clock: Clock,
    tick: Duration,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Rebuilds every stored session by replaying its events.
    pub fn new(store: Store, stored: Vec<Stored>, clock: Clock, tick: Duration) -> Result<Self, SessionError> {
        let mut sessions = HashMap::with_capacity(stored.len());
        for s in stored {
            let session = Session::from_events(&s.events)?;
            sessions.insert(s.session_id, Arc::new(Mutex::new(Live::new(session, s.log))));
        }
        Ok(Self(Arc::new(Inner {
            store,
            sessions: RwLock::new(sessions),
            clock,
            tick,
        })))
    }

    fn now(&self) -> u64 {
        (self.0.clock)()
    }

    async fn live(&self, id: &str) -> ApiResult<Arc<Mutex<Live>>> {
        self.0
            .sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    /// Times out every real-time session whose clock has run out.
    pub async fn sweep(&self) -> ApiResult<()> {
        let all: Vec<_> = self.0.sessions.read().await.values().cloned().collect();
        for live in all {
            let mut l = live.lock().await;
            l.expire(self.now())?;
        }
        Ok(())
    }

    pub fn tick(&self) -> Duration {
        self.0.tick
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/briefing", get(briefing))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/events", get(events))
        .route("/replay", post(replay_log))
        .with_state(state)
}

fn parse_json<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| invalid("body", e.to_string()))
}

fn body_field(body: &Bytes, field: &str) -> ApiResult<Value> {
    let v: Value = serde_json::from_slice(body).map_err(|e| invalid("body", e.to_string()))?;
    match v {
        Value::Object(mut m) => m.remove(field).ok_or_else(|| invalid(field, "missing")),
        _ => Err(invalid("body", "expected a JSON object")),
    }
}

async fn create(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Status>)> {
    let req: CreateRequest = parse_json(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let now = app.now();
    let event = req.plan(id.clone(), rand::random(), now)?;
    let session = Session::from_created(&event)?;
    let log = app.0.store.create(&id, &event)?;
    let status = session.status(now);
    app.0
        .sessions
        .write()
        .await
        .insert(id, Arc::new(Mutex::new(Live::new(session, log))));
    Ok((StatusCode::CREATED, Json(status)))
}

async fn list(State(app): State<AppState>) -> Json<Vec<Status>> {
    let all: Vec<_> = app.0.sessions.read().await.values().cloned().collect();
    let mut out = Vec::with_capacity(all.len());
    for live in all {
        out.push(live.lock().await.session.status(app.now()));
    }
    out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Json(out)
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Status>> {
    let live = app.live(&id).await?;
    let mut l = live.lock().await;
    let now = app.now();
    l.expire(now)?;
    Ok(Json(l.session.status(now)))
}

async fn briefing(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let live = app.live(&id).await?;
    let mut l = live.lock().await;
    let now = app.now();
    l.expire(now)?;
    Ok(Json(l.session.briefing(now)?).into_response())
}

fn parse_action(v: &Value) -> ApiResult<Action> {
    match v {
        Value::Number(n) if n.as_u64() == Some(0) => Ok(Action::Proceed),
        Value::Number(n) if n.as_u64() == Some(1) => Ok(Action::Deploy),
        Value::String(s) if s == "proceed" => Ok(Action::Proceed),
        Value::String(s) if s == "deploy" => Ok(Action::Deploy),
        _ => Err(invalid("action", format!("expected 0, 1, \"proceed\" or \"deploy\", got {v}"))),
    }
}

async fn action(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let live = app.live(&id).await?;
    let act = parse_action(&body_field(&body, "action")?)?;
    let mut l = live.lock().await;
    let now = app.now();
    l.expire(now)?;
    let event = l.session.plan_action(act, now)?;
    l.commit(&event, now)?;
    Ok(Json(l.session.outcome(now).expect("pending after action")).into_response())
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct FeedbackResponse {
    next_phase: Phase,
    stored_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MissionMetrics>,
}

fn parse_slider(v: &Value) -> ApiResult<u32> {
    v.as_u64()
        .and_then(|x| u32::try_from(x).ok())
        .ok_or_else(|| invalid("value", format!("must be an even integer in [0, 100], got {v}")))
}

async fn feedback(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let live = app.live(&id).await?;
    let value = parse_slider(&body_field(&body, "value")?)?;
    let mut l = live.lock().await;
    let now = app.now();
    l.expire(now)?;
    let event = l.session.plan_feedback(value, now)?;
    l.commit(&event, now)?;
    let s = &l.session;
    Ok(Json(FeedbackResponse {
        next_phase: s.phase(),
        stored_value: s.sites().last().expect("site recorded").trust_feedback,
        metrics: s.metrics().cloned(),
    })
    .into_response())
}

async fn export(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let live = app.live(&id).await?;
    let mut l = live.lock().await;
    l.expire(app.now())?;
    let text = l.session.export()?.to_jsonl();
    Ok((
        [
            (header::CONTENT_TYPE, "application/x-ndjson".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{id}.jsonl\"")),
        ],
        text,
    )
        .into_response())
}

async fn replay_log(body: Bytes) -> ApiResult<Json<MissionMetrics>> {
    let text = std::str::from_utf8(&body).map_err(|e| invalid("body", e.to_string()))?;
    let log = MissionLog::from_jsonl(text)?;
    Ok(Json(replay(&log)?))
}

fn sse_event(kind: &str, n: &Notice) -> SseEvent {
    SseEvent::default()
        .event(kind)
        .id(n.seq.to_string())
        .json_data(&n.status)
        .expect("status serializes")
}

/// Pushes a `phase` event on every transition and a `clock` event every tick.
/// The stream ends after the session finishes. Each event carries its
/// journal position as the id, so a reconnecting client simply receives the
/// current state first.
async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let live = app.live(&id).await?;
    let (rx, first) = {
        let mut l = live.lock().await;
        l.expire(app.now())?;
        (l.tx.subscribe(), l.notice(app.now()))
    };
    let mut interval = tokio::time::interval(app.tick());
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    interval.reset();

    struct Feed {
        app: AppState,
        live: Arc<Mutex<Live>>,
        rx: broadcast::Receiver<Notice>,
        interval: tokio::time::Interval,
        first: Option<Notice>,
        done: bool,
    }
    let feed = Feed {
        app,
        live,
        rx,
        interval,
        first: Some(first),
        done: false,
    };
    let stream = stream::unfold(feed, |mut f| async move {
        if f.done {
            return None;
        }
        let (kind, notice) = if let Some(n) = f.first.take() {
            ("phase", n)
        } else {
            tokio::select! {
                msg = f.rx.recv() => match msg {
                    Ok(n) => ("phase", n),
                    Err(broadcast::error::RecvError::Lagged(_)) => ("phase", f.live.lock().await.notice(f.app.now())),
                    Err(broadcast::error::RecvError::Closed) => return None,
                },
                _ = f.interval.tick() => {
                    let mut l = f.live.lock().await;
                    let now = f.app.now();
                    // A storage failure here surfaces on the next request.
                    let _ = l.expire(now);
                    ("clock", l.notice(now))
                }
            }
        };
        f.done = notice.status.phase == Phase::Finished;
        Some((Ok(sse_event(kind, &notice)), f))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
