//! Local HTTP service for interactive evidence ladders.
//!
//! Sessions live in memory; every completed analysis is written to the
//! capsule directory. State-changing requests may carry an `X-Request-Id`
//! header; a repeated id gets the stored reply and changes nothing.

mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use verba_core::capsule::CapsuleStore;
use verba_core::elicitation::DEFAULT_REPETITIONS;
use verba_core::model::{validate_case, CaseFile, EvidenceFile, Modality, SamplerSettings};

use crate::args::ServeArgs;
use crate::config::{make_backend, make_policy, parse_model, Config, ModelEntry, DEFAULT_CAPSULE_DIR, MOCK_CHAT_MODEL};
pub use state::{AppState, Defaults};
use state::{JobTicket, Reply, Session, Tables};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

type App = Arc<AppState>;

pub fn router(app: App) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/evidence", post(add_evidence))
        .route("/sessions/:id/evidence/:eid", delete(remove_evidence))
        .route("/sessions/:id/reorder", post(reorder))
        .route("/sessions/:id/ladder", post(start_ladder).get(get_ladder))
        .route("/jobs/:id", get(get_job))
        .route("/capsules/:id", get(get_capsule))
        .with_state(app)
}

fn reply(status: StatusCode, body: Value) -> Reply {
    Reply {
        status: status.as_u16(),
        body,
    }
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Reply {
    reply(status, json!({ "error": message.to_string() }))
}

fn respond(r: Reply) -> Response {
    let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(r.body)).into_response()
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("view types serialize")
}

/// Apply `f` under the table lock, honouring request ids, then start any
/// job it opened.
fn mutate(
    app: &App,
    headers: &HeaderMap,
    route: String,
    f: impl FnOnce(&mut Tables, &AppState) -> (Reply, Option<JobTicket>),
) -> Response {
    let key = headers
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(|id| format!("{route} {id}"));
    let mut tables = app.lock();
    if let Some(stored) = key.as_ref().and_then(|k| tables.replies.get(k)) {
        return respond(stored.clone());
    }
    let (r, ticket) = f(&mut tables, app);
    if let Some(k) = key {
        if (200..300).contains(&r.status) {
            tables.replies.insert(k, r.clone());
        }
    }
    drop(tables);
    if let Some(ticket) = ticket {
        let app = app.clone();
        tokio::task::spawn_blocking(move || app.run_job(ticket));
    }
    respond(r)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, Reply> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("invalid body: {e}")))
}

/// Look up a session that may be mutated now.
fn idle_session<'a>(t: &'a mut Tables, id: &str) -> Result<&'a mut Session, Reply> {
    let s = t
        .sessions
        .get_mut(id)
        .ok_or_else(|| error(StatusCode::NOT_FOUND, format!("no session {id}")))?;
    if let Some(job) = &s.pending_job {
        return Err(error(
            StatusCode::CONFLICT,
            format!("session {id} is busy with job {job}"),
        ));
    }
    Ok(s)
}

fn all_labels(s: &Session) -> Vec<String> {
    s.case.candidate_readings.iter().map(|r| r.label.clone()).collect()
}

/// Reply for an evidence mutation that started a ladder job.
fn started(t: &mut Tables, id: &str) -> (Reply, Option<JobTicket>) {
    let labels = all_labels(&t.sessions[id]);
    let ticket = AppState::open_job(t, id, labels);
    let view = t.sessions[id].view();
    (
        reply(
            StatusCode::ACCEPTED,
            json!({ "job_id": ticket.job_id(), "session": to_value(&view) }),
        ),
        Some(ticket),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    case: CaseFile,
    #[serde(default)]
    models: Vec<ModelEntry>,
    sampler: Option<SamplerSettings>,
    repetitions: Option<u32>,
}

async fn create_session(State(app): State<App>, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&app, &headers, "POST /sessions".into(), |t, app| {
        let mut run = || -> Result<Reply, Reply> {
            let req: NewSession = parse_body(&body)?;
            let case = req
                .case
                .into_case()
                .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, e))?;
            let mut models = req
                .models
                .iter()
                .map(|m| match m {
                    ModelEntry::Short(s) => parse_model(s, Modality::Chat),
                    ModelEntry::Full(spec) => Ok(spec.clone()),
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| error(StatusCode::BAD_REQUEST, e))?;
            if models.is_empty() {
                models = app.defaults.models.clone();
            }
            if models.is_empty() {
                return Err(error(
                    StatusCode::BAD_REQUEST,
                    "no models given and the server has no default",
                ));
            }
            let sampler = req.sampler.unwrap_or_else(|| app.defaults.sampler.clone());
            sampler.validate().map_err(|e| error(StatusCode::BAD_REQUEST, e))?;
            let repetitions = req.repetitions.unwrap_or(app.defaults.repetitions);
            if repetitions == 0 {
                return Err(error(StatusCode::BAD_REQUEST, "repetitions must be at least 1"));
            }
            let session_id = t.new_session_id();
            let session = Session {
                session_id: session_id.clone(),
                case,
                models,
                sampler,
                repetitions,
                ladders: Default::default(),
                previous: Default::default(),
                capsule_ids: Vec::new(),
                pending_job: None,
                revision: 0,
            };
            let view = session.view();
            t.sessions.insert(session_id, session);
            Ok(reply(StatusCode::CREATED, to_value(&view)))
        };
        (run().unwrap_or_else(|e| e), None)
    })
}

async fn get_session(State(app): State<App>, Path(id): Path<String>) -> Response {
    let t = app.lock();
    respond(match t.sessions.get(&id) {
        Some(s) => reply(StatusCode::OK, to_value(&s.view())),
        None => error(StatusCode::NOT_FOUND, format!("no session {id}")),
    })
}

async fn add_evidence(State(app): State<App>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&app, &headers, format!("POST /sessions/{id}/evidence"), |t, _| {
        let item: EvidenceFile = match parse_body(&body) {
            Ok(i) => i,
            Err(r) => return (r, None),
        };
        let session = match idle_session(t, &id) {
            Ok(s) => s,
            Err(r) => return (r, None),
        };
        let mut case = session.case.clone();
        case.evidence.push(item.into_item());
        let violations = validate_case(&case);
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return (error(StatusCode::UNPROCESSABLE_ENTITY, msg.join("; ")), None);
        }
        session.case = case;
        session.revision += 1;
        started(t, &id)
    })
}

async fn remove_evidence(
    State(app): State<App>,
    Path((id, eid)): Path<(String, String)>,
    headers: HeaderMap,
) -> Response {
    mutate(
        &app,
        &headers,
        format!("DELETE /sessions/{id}/evidence/{eid}"),
        |t, _| {
            let session = match idle_session(t, &id) {
                Ok(s) => s,
                Err(r) => return (r, None),
            };
            let Some(pos) = session.case.evidence.iter().position(|e| e.evidence_id == eid) else {
                return (
                    error(StatusCode::NOT_FOUND, format!("no evidence {eid} in session {id}")),
                    None,
                );
            };
            session.case.evidence.remove(pos);
            session.revision += 1;
            started(t, &id)
        },
    )
}

/// Either the new order of evidence ids or a permutation of positions.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReorderRequest {
    order: Option<Vec<String>>,
    permutation: Option<Vec<usize>>,
}

async fn reorder(State(app): State<App>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&app, &headers, format!("POST /sessions/{id}/reorder"), |t, _| {
        let req: ReorderRequest = match parse_body(&body) {
            Ok(r) => r,
            Err(r) => return (r, None),
        };
        let session = match idle_session(t, &id) {
            Ok(s) => s,
            Err(r) => return (r, None),
        };
        let permutation = match (req.order, req.permutation) {
            (Some(order), None) => order
                .iter()
                .map(|eid| session.case.evidence.iter().position(|e| &e.evidence_id == eid))
                .collect::<Option<Vec<usize>>>(),
            (None, Some(p)) => Some(p),
            _ => {
                return (
                    error(StatusCode::BAD_REQUEST, "give exactly one of order or permutation"),
                    None,
                )
            }
        };
        let Some(case) = permutation.as_deref().and_then(|p| session.case.permuted(p)) else {
            return (
                error(StatusCode::BAD_REQUEST, "not a permutation of the session's evidence"),
                None,
            );
        };
        if case == session.case {
            let view = session.view();
            return (
                reply(StatusCode::OK, json!({ "job_id": null, "session": to_value(&view) })),
                None,
            );
        }
        session.case = case;
        session.revision += 1;
        started(t, &id)
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LadderRequest {
    proposition: Option<String>,
}

async fn start_ladder(State(app): State<App>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&app, &headers, format!("POST /sessions/{id}/ladder"), |t, _| {
        let req: LadderRequest = if body.iter().all(u8::is_ascii_whitespace) {
            LadderRequest::default()
        } else {
            match parse_body(&body) {
                Ok(r) => r,
                Err(r) => return (r, None),
            }
        };
        let session = match idle_session(t, &id) {
            Ok(s) => s,
            Err(r) => return (r, None),
        };
        let labels = match req.proposition {
            Some(p) if session.case.reading(&p).is_some() => vec![p],
            Some(p) => return (error(StatusCode::NOT_FOUND, format!("no reading labelled {p:?}")), None),
            None => all_labels(session),
        };
        let ticket = AppState::open_job(t, &id, labels);
        let job = to_value(&t.jobs[ticket.job_id()]);
        (reply(StatusCode::ACCEPTED, job), Some(ticket))
    })
}

async fn get_ladder(State(app): State<App>, Path(id): Path<String>) -> Response {
    let t = app.lock();
    respond(match t.sessions.get(&id) {
        Some(s) => reply(StatusCode::OK, to_value(&s.ladder_view())),
        None => error(StatusCode::NOT_FOUND, format!("no session {id}")),
    })
}

async fn get_job(State(app): State<App>, Path(id): Path<String>) -> Response {
    let t = app.lock();
    respond(match t.jobs.get(&id) {
        Some(j) => reply(StatusCode::OK, to_value(j)),
        None => error(StatusCode::NOT_FOUND, format!("no job {id}")),
    })
}

async fn get_capsule(State(app): State<App>, Path(id): Path<String>) -> Response {
    match app.store.get_bytes(&id) {
        Ok(Some(bytes)) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Ok(None) => respond(error(StatusCode::NOT_FOUND, format!("no capsule {id}"))),
        Err(e) => respond(error(StatusCode::INTERNAL_SERVER_ERROR, e)),
    }
}

fn build_state(a: &ServeArgs) -> Result<AppState> {
    let config = Config::load(a.config.as_deref())?;
    let mock_table = a.mock_table.clone().or_else(|| config.mock_table.clone());
    let mock = a.mock || config.mock || mock_table.is_some();
    let mut models = a
        .models
        .iter()
        .map(|m| parse_model(m, Modality::Chat))
        .collect::<Result<Vec<_>>>()?;
    if models.is_empty() {
        models = config
            .models
            .iter()
            .map(|m| match m {
                ModelEntry::Short(s) => parse_model(s, Modality::Chat),
                ModelEntry::Full(spec) => Ok(spec.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
    }
    if models.is_empty() && mock {
        models.push(parse_model(MOCK_CHAT_MODEL, Modality::Chat)?);
    }
    let mut sampler = SamplerSettings::default();
    if let Some(t) = config.temperature {
        sampler.temperature = t;
    }
    sampler.seed = config.seed;
    sampler.validate()?;
    let dir = a
        .capsule_dir
        .clone()
        .or_else(|| config.capsule_dir.clone())
        .unwrap_or_else(|| DEFAULT_CAPSULE_DIR.into());
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create capsule directory {}", dir.display()))?;
    Ok(AppState::new(
        CapsuleStore::new(dir),
        make_backend(mock, mock_table.as_deref())?,
        make_policy(mock, config.max_in_flight),
        Defaults {
            models,
            sampler,
            repetitions: a.reps.or(config.reps).unwrap_or(DEFAULT_REPETITIONS),
        },
    ))
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let app = Arc::new(build_state(a)?);
    let runtime = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.bind.as_str(), a.port))
            .await
            .with_context(|| format!("cannot bind {}:{}", a.bind, a.port))?;
        let addr: SocketAddr = listener.local_addr()?;
        println!("http://{addr}");
        eprintln!("serving on http://{addr}; capsules in {}", app.store.dir().display());
        axum::serve(listener, router(app)).await.context("server stopped")
    })
}
