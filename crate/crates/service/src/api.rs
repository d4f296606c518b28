//! HTTP routes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sirl_core::env::TrajectorySet;
use sirl_core::oracle::{write_records, PreferenceLabel, Record, SimilarityAnswer, SimilarityQuery};

use crate::log::{export, AnswerLog, LogEntry};
use crate::render::{render, RenderableTrajectory};
use crate::session::{plan, Phase, PlannedQuery, QueryKind, ServiceConfig};

struct Inner {
    plans: HashMap<String, Vec<PlannedQuery>>,
    /// Answers received per session; answers arrive strictly in plan order.
    progress: HashMap<String, usize>,
    log: AnswerLog,
}

pub struct AppState {
    config: ServiceConfig,
    renderables: Vec<RenderableTrajectory>,
    inner: Mutex<Inner>,
}

impl AppState {
    /// Resumes every session found in `log`.
    pub fn new(pool: &TrajectorySet, config: ServiceConfig, log: AnswerLog) -> sirl_core::Result<Self> {
        if pool.len() < 3 {
            return Err(sirl_core::Error::InvalidArgument("the pool needs at least three trajectories".into()));
        }
        let mut progress: HashMap<String, usize> = HashMap::new();
        for e in log.entries() {
            *progress.entry(e.session.clone()).or_default() += 1;
        }
        let renderables = pool
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| render(i, t, &pool.scene))
            .collect();
        Ok(Self {
            config,
            renderables,
            inner: Mutex::new(Inner {
                plans: HashMap::new(),
                progress,
                log,
            }),
        })
    }

    fn plan_for<'a>(&self, inner: &'a mut Inner, session: &str) -> &'a [PlannedQuery] {
        inner
            .plans
            .entry(session.to_owned())
            .or_insert_with(|| plan(&self.config, session, self.renderables.len()))
    }
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn conflict(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::CONFLICT, msg.into())
}

fn internal(e: sirl_core::Error) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn check_session_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(bad("session ids are 1-64 characters of [A-Za-z0-9_-]"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextPayload {
    Query {
        session: String,
        query_id: u64,
        phase: Phase,
        practice: bool,
        /// `similarity` or `preference`.
        kind: String,
        trajectories: Vec<RenderableTrajectory>,
        #[serde(skip_serializing_if = "Option::is_none")]
        scenario: Option<String>,
        answered: usize,
        total: usize,
    },
    Complete {
        session: String,
        answered: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerBody {
    pub query_id: u64,
    /// Similarity: the two most similar trajectory ids. Preference: the
    /// preferred trajectory id.
    pub choice: Vec<usize>,
    #[serde(default)]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    pub query_id: u64,
    pub phase: Phase,
    pub recorded: bool,
    /// Phase of the following query, absent once the session is complete.
    pub next_phase: Option<Phase>,
}

async fn next_query(State(state): State<Arc<AppState>>, Path(session): Path<String>) -> Result<Json<NextPayload>, ApiError> {
    check_session_id(&session)?;
    let mut inner = state.inner.lock().expect("state lock");
    let done = inner.progress.get(&session).copied().unwrap_or(0);
    let plan = state.plan_for(&mut inner, &session);
    let total = plan.len();
    let Some(q) = plan.get(done) else {
        return Ok(Json(NextPayload::Complete { session, answered: done }));
    };
    let (kind, scenario) = match q.query {
        QueryKind::Similarity { .. } => ("similarity", None),
        QueryKind::Preference { .. } => ("preference", Some(state.config.scenario.clone())),
    };
    Ok(Json(NextPayload::Query {
        query_id: q.id,
        phase: q.phase,
        practice: q.phase.is_practice(),
        kind: kind.into(),
        trajectories: q.query.trajectories().iter().map(|&i| state.renderables[i].clone()).collect(),
        scenario,
        answered: done,
        total,
        session,
    }))
}

async fn submit_answer(
    State(state): State<Arc<AppState>>,
    Path(session): Path<String>,
    Json(body): Json<AnswerBody>,
) -> Result<Json<Ack>, ApiError> {
    check_session_id(&session)?;
    let mut inner = state.inner.lock().expect("state lock");
    let done = inner.progress.get(&session).copied().unwrap_or(0);
    let plan = state.plan_for(&mut inner, &session);
    let Some(current) = plan.get(done).copied() else {
        return Err(conflict("session is complete"));
    };
    let next_phase = plan.get(done + 1).map(|q| q.phase);
    if body.query_id < current.id {
        return Err(conflict(format!("query {} was already answered", body.query_id)));
    }
    if body.query_id != current.id {
        return Err(conflict(format!("query {} is not the current query ({})", body.query_id, current.id)));
    }
    let record = match current.query {
        QueryKind::Similarity { trajectories } => {
            let [p1, p2] = body.choice[..] else {
                return Err(bad("a similarity answer names exactly two trajectories"));
            };
            let query = SimilarityQuery::new(current.id, trajectories).map_err(internal)?;
            let mut answer = SimilarityAnswer::from_choice(&query, p1, p2, &session).map_err(|e| bad(e.to_string()))?;
            answer.response_ms = body.elapsed_ms;
            Record::SimilarityAnswer(answer)
        }
        QueryKind::Preference { trajectories: [a, b] } => {
            let [chosen] = body.choice[..] else {
                return Err(bad("a preference answer names exactly one trajectory"));
            };
            if chosen != a && chosen != b {
                return Err(bad(format!("trajectory {chosen} is not part of query {}", current.id)));
            }
            Record::PreferenceLabel(PreferenceLabel {
                query_id: current.id,
                a,
                b,
                label: u8::from(chosen == a),
                responder: session.clone(),
                response_ms: body.elapsed_ms,
            })
        }
    };
    inner
        .log
        .append(LogEntry {
            session: session.clone(),
            query_id: current.id,
            phase: current.phase,
            record,
        })
        .map_err(internal)?;
    *inner.progress.entry(session).or_default() += 1;
    Ok(Json(Ack {
        accepted: true,
        query_id: current.id,
        phase: current.phase,
        recorded: !current.phase.is_practice(),
        next_phase,
    }))
}

#[derive(Debug, Deserialize)]
struct ExportParams {
    phase: String,
}

async fn export_phase(State(state): State<Arc<AppState>>, Query(params): Query<ExportParams>) -> Result<Response, ApiError> {
    let phase = match params.phase.as_str() {
        "similarity" => Phase::Similarity,
        "preference" => Phase::Preference,
        other => return Err(bad(format!("unknown export phase `{other}`"))),
    };
    let records = {
        let inner = state.inner.lock().expect("state lock");
        export(inner.log.entries(), phase).map_err(|e| ApiError(StatusCode::NOT_FOUND, e.to_string()))?
    };
    let mut body = Vec::new();
    write_records(&mut body, &records).map_err(internal)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let inner = state.inner.lock().expect("state lock");
    Json(serde_json::json!({
        "status": "ok",
        "trajectories": state.renderables.len(),
        "sessions": inner.progress.len(),
        "answers": inner.log.entries().len(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/session/{id}/next", get(next_query))
        .route("/session/{id}/answer", post(submit_answer))
        .route("/export", get(export_phase))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
