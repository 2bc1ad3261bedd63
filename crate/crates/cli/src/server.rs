//! HTTP front end of the session service.
//!
//! | method | path | body / query | returns |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | `{subject_alias, mode, form_id?, max_items?, se_target?}` | session (201) |
//! | GET | `/v1/sessions` | | session summaries |
//! | GET | `/v1/sessions/{id}` | | session |
//! | GET, POST | `/v1/sessions/{id}/next` | | pending item |
//! | POST | `/v1/sessions/{id}/responses` | `{item_id, choice_index, response_ms}` | session |
//! | GET | `/v1/sessions/{id}/estimate` | | ability estimate |
//! | GET | `/v1/export` | `include_partial`, `format=json\|csv` | response matrix |
//! | GET | `/v1/forms` | | form ids |
//! | GET | `/v1/health` | | status |
//!
//! Every JSON payload carries `schema` and `version` fields; errors are
//! `{"error": {"kind", "message"}}` with a matching HTTP status.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use triadcal_core::assembly::SubsetManifest;
use triadcal_core::schema::{API_SCHEMA, SCHEMA_VERSION};
use triadcal_core::session::{AdaptivePolicy, ServiceConfig, SessionMode, SessionPlan, SessionService};
use triadcal_core::triads::read_triads;
use triadcal_core::{Error, FittedModel, Result};

/// Contents of the `serve` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeConfig {
    /// Fitted model whose items are administered.
    pub model: PathBuf,
    /// Triad file giving stimuli and answer keys for the model's items.
    pub triads: PathBuf,
    /// Subset manifests available as fixed forms.
    #[serde(default)]
    pub forms: Vec<PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Holds the event log and shutdown snapshots.
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(flatten)]
    pub service: ServiceConfig,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_data_dir() -> PathBuf {
    "data".into()
}

pub const EVENT_LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "sessions.snapshot.json";

impl ServeConfig {
    /// Reads a TOML config; relative paths are taken from the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config: ServeConfig = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        config.model = resolve(&config.model);
        config.triads = resolve(&config.triads);
        config.forms = config.forms.iter().map(resolve).collect();
        config.data_dir = resolve(&config.data_dir);
        Ok(config)
    }

    /// Opens the service, replaying any existing event log in the data directory.
    pub fn open_service(&self) -> Result<SessionService> {
        let model = FittedModel::read(&self.model)?;
        let triads = read_triads(&self.triads)?;
        let forms = self.forms.iter().map(|p| SubsetManifest::read(p)).collect::<Result<Vec<_>>>()?;
        std::fs::create_dir_all(&self.data_dir).map_err(|e| Error::Io {
            path: self.data_dir.clone(),
            source: e,
        })?;
        SessionService::open(model, triads, forms, self.service.clone(), &self.data_dir.join(EVENT_LOG_FILE))
    }
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::UnknownSession(_) | Error::UnknownForm(_) | Error::UnknownItem(_) => StatusCode::NOT_FOUND,
        Error::StaleItem { .. } | Error::SessionComplete(_) => StatusCode::CONFLICT,
        Error::InvalidChoice(_) | Error::InvalidInput(_) | Error::Parse(_) | Error::Json(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn envelope(body: Value) -> Value {
    let mut out = json!({ "schema": API_SCHEMA, "version": SCHEMA_VERSION });
    if let (Some(out), Value::Object(body)) = (out.as_object_mut(), body) {
        out.extend(body);
    }
    out
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = envelope(json!({ "error": { "kind": self.0.kind(), "message": self.0.to_string() } }));
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn ok<T: Serialize>(status: StatusCode, body: &T) -> ApiResult {
    let value = serde_json::to_value(body).map_err(Error::from)?;
    Ok((status, Json(envelope(value))).into_response())
}

async fn blocking<T, F>(svc: &Arc<SessionService>, f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionService) -> Result<T> + Send + 'static,
{
    let svc = Arc::clone(svc);
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| Error::InvalidInput(format!("worker failed: {e}")))?
}

fn body<T>(payload: std::result::Result<Json<T>, JsonRejection>) -> Result<T> {
    payload.map(|Json(v)| v).map_err(|e| Error::InvalidInput(e.body_text()))
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    subject_alias: String,
    mode: SessionMode,
    form_id: Option<String>,
    max_items: Option<usize>,
    se_target: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ResponseRequest {
    item_id: String,
    choice_index: u8,
    response_ms: u64,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_partial: bool,
    #[serde(default)]
    format: Option<String>,
}

async fn create(State(svc): State<Arc<SessionService>>, payload: std::result::Result<Json<CreateRequest>, JsonRejection>) -> ApiResult {
    let req = body(payload)?;
    let plan = match req.mode {
        SessionMode::FixedForm => SessionPlan::FixedForm {
            form_id: req.form_id.ok_or_else(|| Error::InvalidInput("FIXED_FORM sessions need a form_id".into()))?,
        },
        SessionMode::Adaptive => {
            let default = svc.config().default_policy;
            SessionPlan::Adaptive {
                policy: AdaptivePolicy {
                    max_items: req.max_items.unwrap_or(default.max_items),
                    se_target: req.se_target.unwrap_or(default.se_target),
                },
            }
        }
    };
    let session = blocking(&svc, move |s| s.create_session(&req.subject_alias, plan)).await?;
    ok(StatusCode::CREATED, &json!({ "session": session }))
}

async fn list(State(svc): State<Arc<SessionService>>) -> ApiResult {
    let sessions: Vec<_> = svc.sessions().iter().map(triadcal_core::session::SessionSummary::from).collect();
    ok(StatusCode::OK, &json!({ "sessions": sessions }))
}

async fn show(State(svc): State<Arc<SessionService>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ok(StatusCode::OK, &json!({ "session": svc.session(&id)? }))
}

async fn next(State(svc): State<Arc<SessionService>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let item = blocking(&svc, move |s| s.next_item(&id)).await?;
    ok(StatusCode::OK, &json!({ "item": item }))
}

async fn respond(
    State(svc): State<Arc<SessionService>>,
    UrlPath(id): UrlPath<String>,
    payload: std::result::Result<Json<ResponseRequest>, JsonRejection>,
) -> ApiResult {
    let req = body(payload)?;
    let session = blocking(&svc, move |s| s.record_response(&id, &req.item_id, req.choice_index, req.response_ms)).await?;
    ok(StatusCode::OK, &json!({ "session": session }))
}

async fn estimate(State(svc): State<Arc<SessionService>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let session = svc.session(&id)?;
    ok(
        StatusCode::OK,
        &json!({ "session_id": session.session_id, "status": session.status, "n_administered": session.administered.len(), "estimate": session.current_estimate }),
    )
}

async fn export(State(svc): State<Arc<SessionService>>, Query(q): Query<ExportQuery>) -> ApiResult {
    let exported = svc.export_sessions(q.include_partial)?;
    match q.format.as_deref() {
        Some("csv") => {
            let mut buf = Vec::new();
            exported.matrix.to_writer(&mut buf)?;
            Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
        }
        None | Some("json") => {
            let m = &exported.matrix;
            let rows: Vec<Value> = (0..m.n_subjects())
                .map(|i| json!({ "subject_id": m.subject_ids()[i], "responses": m.row(i).iter().map(|c| c.map(u8::from)).collect::<Vec<_>>() }))
                .collect();
            ok(StatusCode::OK, &json!({ "item_ids": m.item_ids(), "rows": rows, "sessions": exported.sessions }))
        }
        Some(other) => Err(Error::InvalidInput(format!("unknown export format `{other}`")).into()),
    }
}

async fn forms(State(svc): State<Arc<SessionService>>) -> ApiResult {
    ok(StatusCode::OK, &json!({ "forms": svc.form_ids() }))
}

async fn health(State(svc): State<Arc<SessionService>>) -> ApiResult {
    ok(StatusCode::OK, &json!({ "status": "ok", "n_items": svc.model().items.len(), "exposure_ms": svc.config().exposure_ms }))
}

pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/forms", get(forms))
        .route("/v1/sessions", post(create).get(list))
        .route("/v1/sessions/{id}", get(show))
        .route("/v1/sessions/{id}/next", get(next).post(next))
        .route("/v1/sessions/{id}/responses", post(respond))
        .route("/v1/sessions/{id}/estimate", get(estimate))
        .route("/v1/export", get(export))
        .with_state(service)
}

/// Serves until interrupted, then writes a snapshot of every session.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let service = Arc::new(config.open_service()?);
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| Error::Io {
        path: PathBuf::from(&addr),
        source: e,
    })?;
    info!("session service listening on {addr}");
    axum::serve(listener, router(Arc::clone(&service)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Io {
            path: PathBuf::from(&addr),
            source: e,
        })?;
    let snapshot = config.data_dir.join(SNAPSHOT_FILE);
    std::fs::write(&snapshot, service.snapshot_json()?).map_err(|e| Error::Io { path: snapshot, source: e })?;
    Ok(())
}
