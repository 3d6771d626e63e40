use std::collections::VecDeque;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use super::state::{ObservationEvent, ObservationQuery, PolicySnapshot, Service};
use super::ServiceError;
use crate::risk::RiskPolicy;

type AppState = Arc<Service>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, body) = match &self {
            ServiceError::NotFound(_) | ServiceError::UnknownModel(_) => {
                (StatusCode::NOT_FOUND, json!({ "error": self.to_string() }))
            }
            ServiceError::InvalidPolicy(errs) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "invalid policy", "errors": errs }),
            ),
            ServiceError::BadRequest(_) | ServiceError::Risk(_) => {
                (StatusCode::BAD_REQUEST, json!({ "error": self.to_string() }))
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": self.to_string() })),
        };
        (status, Json(body)).into_response()
    }
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, Response> {
    r.map(|Json(v)| v).map_err(|e| {
        (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": "malformed body", "errors": [e.body_text()] })),
        )
            .into_response()
    })
}

/// All operator endpoints over `service`.
pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/observations", get(list_observations))
        .route("/observations/{id}", get(get_observation))
        .route("/observations/{id}/label", post(label_observation))
        .route("/policy", get(get_policy).put(put_policy))
        .route("/policy/whatif", post(what_if))
        .route("/models", get(list_models))
        .route("/models/activate", post(activate_model))
        .route("/manifest", get(manifest))
        .route("/events", get(events))
        .with_state(service)
}

/// Binds `addr` and serves until the future is dropped.
pub async fn serve(service: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}

async fn list_observations(State(s): State<AppState>, Query(q): Query<ObservationQuery>) -> Response {
    match s.query(&q) {
        Ok(page) => Json(page).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_observation(State(s): State<AppState>, Path(id): Path<u64>) -> Response {
    match s.observation(id) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct LabelRequest {
    /// Class name or numeric id.
    class: serde_json::Value,
    operator: String,
}

async fn label_observation(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    req: Result<Json<LabelRequest>, JsonRejection>,
) -> Response {
    let req = match body(req) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let class = match &req.class {
        serde_json::Value::String(c) => c.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => return ServiceError::BadRequest(format!("class must be a name or id, got {other}")).into_response(),
    };
    let res = tokio::task::spawn_blocking(move || s.submit_label(id, &class, &req.operator)).await;
    match res {
        Ok(Ok(r)) => Json(json!({
            "observation_id": r.observation_id,
            "label": r.label,
            "durable": true,
        }))
        .into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn get_policy(State(s): State<AppState>) -> Json<PolicySnapshot> {
    let p = s.policy();
    Json(PolicySnapshot { version: p.version, policy: (*p).clone() })
}

async fn put_policy(State(s): State<AppState>, req: Result<Json<RiskPolicy>, JsonRejection>) -> Response {
    let p = match body(req) {
        Ok(p) => p,
        Err(resp) => return resp,
    };
    match s.update_policy(p) {
        Ok(version) => Json(json!({ "version": version })).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn what_if(State(s): State<AppState>, req: Result<Json<RiskPolicy>, JsonRejection>) -> Response {
    let p = match body(req) {
        Ok(p) => p,
        Err(resp) => return resp,
    };
    match s.what_if(&p) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn list_models(State(s): State<AppState>) -> Response {
    Json(s.models()).into_response()
}

#[derive(Deserialize)]
struct ActivateRequest {
    id: String,
}

async fn activate_model(State(s): State<AppState>, req: Result<Json<ActivateRequest>, JsonRejection>) -> Response {
    let req = match body(req) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match s.activate_model(&req.id) {
        Ok(()) => Json(json!({ "active": req.id })).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn manifest(State(s): State<AppState>) -> Response {
    Json(s.training_manifest()).into_response()
}

#[derive(Deserialize)]
struct EventsQuery {
    /// Replay persisted observations from this id on before going live.
    since: Option<u64>,
}

fn to_sse(ev: &ObservationEvent) -> Event {
    Event::default()
        .id(ev.observation_id.to_string())
        .event("assessment")
        .json_data(ev)
        .unwrap_or_else(|_| Event::default().comment("unserializable event"))
}

/// Assessments in increasing id order. A subscriber that falls behind the
/// broadcast buffer is caught up from the observation log, so every event
/// arrives at least once.
async fn events(
    State(s): State<AppState>,
    Query(q): Query<EventsQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    struct Cursor {
        service: AppState,
        rx: tokio::sync::broadcast::Receiver<ObservationEvent>,
        pending: VecDeque<ObservationEvent>,
        last: Option<u64>,
    }
    let rx = s.subscribe();
    let (pending, last) = match q.since {
        Some(since) => {
            let replay = s.observations_after(since.checked_sub(1));
            (replay.iter().map(ObservationEvent::from).collect(), since.checked_sub(1))
        }
        None => (VecDeque::new(), s.observations_after(None).last().map(|r| r.observation_id)),
    };
    let start = Cursor { service: s, rx, pending, last };
    let stream = futures::stream::unfold(start, |mut c| async move {
        loop {
            if let Some(ev) = c.pending.pop_front() {
                if c.last.is_some_and(|l| ev.observation_id <= l) {
                    continue;
                }
                c.last = Some(ev.observation_id);
                return Some((Ok(to_sse(&ev)), c));
            }
            match c.rx.recv().await {
                Ok(ev) => {
                    if c.last.is_some_and(|l| ev.observation_id <= l) {
                        continue;
                    }
                    c.last = Some(ev.observation_id);
                    return Some((Ok(to_sse(&ev)), c));
                }
                Err(RecvError::Lagged(_)) => {
                    c.pending = c.service.observations_after(c.last).iter().map(ObservationEvent::from).collect();
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
