//! HTTP API under `/api/v1`, plus `/healthz` and optional static files.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use nl2bi_core::catalog::{Catalog, CatalogError, ViewDef};
use nl2bi_core::dialogue::SessionState;
use nl2bi_core::selector::{AdvisorEvent, AdvisorState};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::engine::{unix_now, Engine};
use crate::problem::Problem;
use crate::store::{write_atomic, AdvisorLog, SessionStore};

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn storage(e: io::Error) -> Problem {
    tracing::error!(error = %e, "storage failure");
    Problem::new(
        500,
        "storage_error",
        format!("could not persist state: {e}"),
    )
}

fn bad_body(e: JsonRejection) -> Problem {
    Problem::new(400, "bad_request", e.body_text())
}

/// The single advisor writer: log first, then memory.
struct Advisor {
    state: AdvisorState,
    log: Option<AdvisorLog>,
}

impl Advisor {
    fn record(&mut self, events: &[AdvisorEvent]) -> io::Result<()> {
        if let Some(log) = &mut self.log {
            log.append(events)?;
        }
        for e in events {
            self.state.apply(e);
        }
        Ok(())
    }
}

type SessionSlot = Arc<tokio::sync::Mutex<SessionState>>;

pub struct AppState {
    catalog: RwLock<Arc<Catalog>>,
    catalog_path: Option<PathBuf>,
    /// Serializes catalog read-modify-write cycles.
    catalog_writer: tokio::sync::Mutex<()>,
    sessions: Mutex<BTreeMap<String, SessionSlot>>,
    next_session: AtomicU64,
    store: Option<SessionStore>,
    advisor: Mutex<Advisor>,
    engine: Engine,
    session_cap: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("cannot read catalog {path}: {source}")]
    CatalogRead { path: PathBuf, source: io::Error },
    #[error("catalog {path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error("cannot load sessions: {0}")]
    Sessions(io::Error),
    #[error("cannot open advisor log: {0}")]
    Advisor(io::Error),
}

pub fn load_catalog(path: &Path) -> Result<Catalog, StartupError> {
    let text = std::fs::read_to_string(path).map_err(|source| StartupError::CatalogRead {
        path: path.into(),
        source,
    })?;
    Catalog::from_json(&text).map_err(|source| StartupError::Catalog {
        path: path.into(),
        source,
    })
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix("s-")?.parse().ok()
}

impl AppState {
    /// State backed by the files named in `cfg`, restored from disk.
    pub fn open(cfg: &ServiceConfig, engine: Engine) -> Result<Self, StartupError> {
        let catalog = load_catalog(&cfg.catalog)?;
        let store = SessionStore::new(cfg.sessions_dir());
        let sessions = store.load_all().map_err(StartupError::Sessions)?;
        let (log, advisor) = AdvisorLog::open(&cfg.advisor_log).map_err(StartupError::Advisor)?;
        let state = Self::build(
            catalog,
            engine,
            cfg.session_cap,
            Some(store),
            advisor,
            Some(log),
        );
        let state = AppState {
            catalog_path: Some(cfg.catalog.clone()),
            ..state
        };
        let mut max = 0;
        {
            let mut map = state.sessions.lock().expect("session map");
            for s in sessions {
                max = max.max(session_number(&s.session_id).unwrap_or(0));
                map.insert(s.session_id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
            }
        }
        state.next_session.store(max + 1, Ordering::SeqCst);
        Ok(state)
    }

    /// State with nothing persisted.
    pub fn in_memory(catalog: Catalog, engine: Engine, session_cap: usize) -> Self {
        Self::build(
            catalog,
            engine,
            session_cap,
            None,
            AdvisorState::default(),
            None,
        )
    }

    fn build(
        catalog: Catalog,
        engine: Engine,
        session_cap: usize,
        store: Option<SessionStore>,
        advisor: AdvisorState,
        log: Option<AdvisorLog>,
    ) -> Self {
        Self {
            catalog: RwLock::new(Arc::new(catalog)),
            catalog_path: None,
            catalog_writer: tokio::sync::Mutex::new(()),
            sessions: Mutex::new(BTreeMap::new()),
            next_session: AtomicU64::new(1),
            store,
            advisor: Mutex::new(Advisor {
                state: advisor,
                log,
            }),
            engine,
            session_cap,
        }
    }

    pub fn catalog(&self) -> Arc<Catalog> {
        self.catalog.read().expect("catalog lock").clone()
    }

    fn session(&self, id: &str) -> Result<SessionSlot, Problem> {
        self.sessions
            .lock()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| {
                Problem::new(
                    404,
                    "session_not_found",
                    format!("session {id} does not exist"),
                )
            })
    }

    fn persist(&self, session: &SessionState) -> io::Result<()> {
        match &self.store {
            Some(s) => s.save(session),
            None => Ok(()),
        }
    }

    fn record(&self, events: &[AdvisorEvent]) -> io::Result<()> {
        self.advisor.lock().expect("advisor lock").record(events)
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(query))
        .route("/advisor", get(advisor_report))
        .route("/advisor/feedback", post(feedback))
        .route("/catalog/views", get(list_views).post(add_view))
        .route("/catalog/views/{id}", delete(remove_view));
    let app = Router::new()
        .route("/healthz", get(healthz))
        .nest("/api/v1", api)
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn create_session(State(st): State<Arc<AppState>>) -> Result<Response, Problem> {
    let n = st.next_session.fetch_add(1, Ordering::SeqCst);
    let id = format!("s-{n:06}");
    let session = SessionState::new(id.clone()).with_cap(st.session_cap);
    let st2 = st.clone();
    let saved = session.clone();
    tokio::task::spawn_blocking(move || st2.persist(&saved))
        .await
        .expect("persist task")
        .map_err(storage)?;
    st.sessions
        .lock()
        .expect("session map")
        .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

async fn get_session(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionState>, Problem> {
    let slot = st.session(&id)?;
    let s = slot.lock().await;
    Ok(Json(s.clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    utterance: String,
}

async fn query(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Response, Problem> {
    let Json(req) = body.map_err(bad_body)?;
    let slot = st.session(&id)?;
    // Held until the turn is resolved and persisted: later queries on the
    // same session wait here.
    let mut guard = slot.lock_owned().await;
    let catalog = st.catalog();
    let st2 = st.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let turn = st2
            .engine
            .run_turn(&catalog, &mut guard, &req.utterance, unix_now());
        st2.persist(&guard)?;
        st2.record(&turn.events)?;
        Ok::<_, io::Error>(turn.result)
    })
    .await
    .expect("query task")
    .map_err(storage)?;
    match outcome {
        Ok(resp) => Ok(Json(resp).into_response()),
        Err(e) => Err(Problem::from(&e)),
    }
}

async fn advisor_report(State(st): State<Arc<AppState>>) -> Response {
    let catalog = st.catalog();
    let report = st
        .advisor
        .lock()
        .expect("advisor lock")
        .state
        .report(&catalog);
    Json(report).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    view_id: String,
    useful: bool,
}

async fn feedback(
    State(st): State<Arc<AppState>>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Response, Problem> {
    let Json(req) = body.map_err(bad_body)?;
    if st.catalog().view(&req.view_id).is_none() {
        return Err(Problem::new(
            404,
            "view_not_found",
            format!("view {} does not exist", req.view_id),
        ));
    }
    let ev = AdvisorEvent::Feedback {
        view_id: req.view_id.clone(),
        useful: req.useful,
    };
    let st2 = st.clone();
    let counts = tokio::task::spawn_blocking(move || {
        let mut adv = st2.advisor.lock().expect("advisor lock");
        adv.record(std::slice::from_ref(&ev))?;
        Ok::<_, io::Error>(
            adv.state
                .feedback
                .get(&req.view_id)
                .cloned()
                .unwrap_or_default(),
        )
    })
    .await
    .expect("feedback task")
    .map_err(storage)?;
    Ok(Json(counts).into_response())
}

async fn list_views(State(st): State<Arc<AppState>>) -> Response {
    Json(st.catalog().views().to_vec()).into_response()
}

/// Rewrites the catalog file, then swaps the in-memory catalog.
async fn install_catalog(st: &Arc<AppState>, next: Catalog) -> Result<(), Problem> {
    if let Some(path) = st.catalog_path.clone() {
        let body = next.to_json_pretty();
        tokio::task::spawn_blocking(move || write_atomic(&path, body.as_bytes()))
            .await
            .expect("catalog write task")
            .map_err(storage)?;
    }
    *st.catalog.write().expect("catalog lock") = Arc::new(next);
    Ok(())
}

async fn add_view(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, Problem> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let view: ViewDef = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Problem::new(422, "invalid_view", "view definition is malformed").with_details(json!([{
            "path": if path == "." { String::new() } else { path },
            "message": e.inner().to_string(),
        }]))
    })?;
    let _w = st.catalog_writer.lock().await;
    let current = st.catalog();
    let index = current.views().len();
    let next = match current.with_view(view.clone()) {
        Ok(c) => c,
        Err(CatalogError::DuplicateView(id)) => {
            return Err(
                Problem::new(409, "duplicate_view", format!("view {id} already exists"))
                    .with_details(json!([{ "path": "view_id", "message": "duplicate view_id" }])),
            )
        }
        Err(CatalogError::Invalid(issues)) => {
            let prefix = format!("views[{index}].");
            let details: Vec<_> = issues
                .iter()
                .map(|i| {
                    json!({
                        "path": i.path.strip_prefix(&prefix).unwrap_or(&i.path),
                        "message": i.message,
                    })
                })
                .collect();
            return Err(
                Problem::new(422, "invalid_view", "view definition is invalid")
                    .with_details(json!(details)),
            );
        }
        Err(e) => return Err(Problem::new(422, "invalid_view", e.to_string())),
    };
    install_catalog(&st, next).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn remove_view(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, Problem> {
    let _w = st.catalog_writer.lock().await;
    let next = match st.catalog().without_view(&id) {
        Ok(c) => c,
        Err(CatalogError::UnknownView(_)) => {
            return Err(Problem::new(
                404,
                "view_not_found",
                format!("view {id} does not exist"),
            ))
        }
        Err(CatalogError::Invalid(issues)) => {
            return Err(Problem::new(
                409,
                "view_in_use",
                "removing the view would invalidate the catalog",
            )
            .with_details(json!(issues)))
        }
        Err(e) => return Err(Problem::new(409, "view_in_use", e.to_string())),
    };
    install_catalog(&st, next).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}
