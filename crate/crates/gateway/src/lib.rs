//! HTTP front end: query submission, status, results, cost report,
//! schemas and text-to-SQL, plus the static web console under `/ui`.

pub mod scheduler;
pub mod translate;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;
use turbodb_core::billing::build_report;
use turbodb_core::catalog::Catalog;
use turbodb_core::config::{Config, Nl2SqlBackend};
use turbodb_core::scheduler::{Coordinator, QueryStatus, ServiceLevel, Submission};
use turbodb_core::sql::{Engine, IntermediateStore};
use turbodb_core::{Error as CoreError, Millis, QueryId};

pub use scheduler::{QueryView, SchedulerHandle, Snapshot, SubmitOutcome};
pub use translate::{HttpTranslator, TemplateTranslator, TranslateError, TranslateRequest, TranslatorWrapper};

#[derive(Clone)]
pub struct AppState {
    pub scheduler: SchedulerHandle,
    pub catalog: Arc<Catalog>,
    pub translator: Arc<dyn TranslatorWrapper>,
    pub token: Option<String>,
}

/// An error response: `{"error": message}` plus any extra fields.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub extra: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
            extra: Value::Null,
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> ApiError {
        let status = match e {
            CoreError::NotFound(_) => StatusCode::NOT_FOUND,
            CoreError::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            CoreError::Syntax { .. } | CoreError::Semantic(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<scheduler::Stopped> for ApiError {
    fn from(e: scheduler::Stopped) -> ApiError {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.message});
        if let (Value::Object(b), Value::Object(extra)) = (&mut body, self.extra) {
            b.extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Builds the translator selected by `nl2sql.backend`.
pub fn translator_from_config(config: &Config) -> turbodb_core::Result<Arc<dyn TranslatorWrapper>> {
    match config.nl2sql.backend {
        Nl2SqlBackend::Template => Ok(Arc::new(TemplateTranslator)),
        Nl2SqlBackend::Http => {
            let endpoint = config
                .nl2sql
                .endpoint
                .clone()
                .ok_or_else(|| CoreError::Config("nl2sql.backend is http but nl2sql.endpoint is unset".into()))?;
            let t = HttpTranslator::new(endpoint, Duration::from_millis(config.nl2sql.timeout))
                .map_err(|e| CoreError::Config(e.to_string()))?;
            Ok(Arc::new(t))
        }
    }
}

/// Starts the scheduling loop and assembles the application state.
pub fn start(config: &Config, catalog: Arc<Catalog>) -> turbodb_core::Result<AppState> {
    let engine = Arc::new(Engine::new(
        catalog.clone(),
        IntermediateStore::in_memory(),
        config.engine.clone(),
    ));
    let coordinator = Coordinator::new(config.clone(), engine)?;
    Ok(AppState {
        scheduler: SchedulerHandle::spawn(coordinator),
        catalog,
        translator: translator_from_config(config)?,
        token: config.gateway.token.clone().filter(|t| !t.is_empty()),
    })
}

pub fn router(state: AppState, ui_dir: Option<&str>) -> Router {
    let api = Router::new()
        .route("/queries", post(submit_query))
        .route("/queries/{id}", get(get_query))
        .route("/queries/{id}/result", get(get_result))
        .route("/report", get(get_report))
        .route("/schemas", get(get_schemas))
        .route("/translate", post(translate))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let ui = match ui_dir {
        Some(dir) => Router::new().nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => Router::new()
            .route("/ui", get(placeholder_ui))
            .route("/ui/", get(placeholder_ui)),
    };
    api.merge(ui)
}

/// Binds `gateway.listen` and serves until the process ends.
pub async fn serve(config: Config, catalog: Arc<Catalog>) -> std::io::Result<()> {
    let state = start(&config, catalog).map_err(std::io::Error::other)?;
    let app = router(state, config.gateway.ui_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(&config.gateway.listen).await?;
    axum::serve(listener, app).await
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            let mut r = ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response();
            r.headers_mut()
                .insert(header::WWW_AUTHENTICATE, header::HeaderValue::from_static("Bearer"));
            return r;
        }
    }
    next.run(request).await
}

async fn placeholder_ui() -> Html<&'static str> {
    Html(
        "<!doctype html><title>turbodb</title><p>The web console bundle is not installed. \
         Set <code>gateway.ui_dir</code> to its directory.</p>",
    )
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SubmitBody {
    sql: String,
    level: String,
    result_limit: Option<usize>,
    grace_s: Option<u64>,
    database: Option<String>,
}

async fn submit_query(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let body: SubmitBody = parse_body(&body)?;
    let level: ServiceLevel = body.level.parse().map_err(|e: CoreError| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let mut submission = Submission::new(body.sql, level);
    if let Some(limit) = body.result_limit {
        if limit == 0 {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "resultLimit must be at least 1"));
        }
        submission.result_limit = limit;
    }
    if let Some(g) = body.grace_s {
        if level != ServiceLevel::Relaxed || g == 0 {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "graceS applies to relaxed queries and must be positive",
            ));
        }
        submission.grace = Some(g.saturating_mul(1000));
    }
    submission.database = body.database.filter(|d| !d.is_empty());
    let out = state.scheduler.submit(submission).await?;
    let view = json!({
        "queryId": out.query_id,
        "status": out.status,
        "billedPriceQuote": out.quote,
    });
    if out.status == QueryStatus::Failed {
        return Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: out.error.unwrap_or_default(),
            extra: view,
        });
    }
    Ok(Json(view).into_response())
}

fn lookup(state: &AppState, id: &str) -> ApiResult<(Arc<Snapshot>, QueryId)> {
    let snapshot = state.scheduler.snapshot();
    if let Some(fault) = &snapshot.fault {
        return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, fault.clone()));
    }
    let id = id
        .parse::<QueryId>()
        .ok()
        .filter(|&id| snapshot.query(id).is_some())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no query {id}")))?;
    Ok((snapshot, id))
}

async fn get_query(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (snapshot, id) = lookup(&state, &id)?;
    Ok(Json(snapshot.query(id).expect("looked up")).into_response())
}

async fn get_result(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (snapshot, id) = lookup(&state, &id)?;
    let q = snapshot.query(id).expect("looked up");
    match (&q.result, q.status) {
        (Some(rs), QueryStatus::Finished) => Ok(Json(rs.as_ref()).into_response()),
        _ => {
            let mut e = ApiError::new(StatusCode::CONFLICT, format!("query {id} is {}", q.status.name()));
            e.extra = json!({"status": q.status, "errorMessage": q.error_message});
            Err(e)
        }
    }
}

async fn get_report(State(state): State<AppState>, Query(w): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let parse = |k: &str| -> ApiResult<Option<Millis>> {
        w.get(k)
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.parse()
                    .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, format!("{k} must be milliseconds")))
            })
            .transpose()
    };
    let (from, to) = (parse("from")?, parse("to")?);
    let snapshot = state.scheduler.snapshot();
    let latest = snapshot.queries.last().map_or(0, |q| q.submit_ms);
    let from = from.unwrap_or(0);
    let to = to.unwrap_or(snapshot.now_ms.max(latest).max(from));
    let report = build_report(from, to, &snapshot.cost_records())?;
    Ok(Json(report).into_response())
}

async fn get_schemas(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let db = state.catalog.resolve_database(q.get("db").map(String::as_str))?;
    Ok(Json(state.catalog.schema_elements(&db.name)?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslateBody {
    question: String,
    database: Option<String>,
}

async fn translate(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let body: TranslateBody = parse_body(&body)?;
    if body.question.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "question must not be empty"));
    }
    let db = state.catalog.resolve_database(body.database.as_deref())?;
    let request = TranslateRequest {
        question: body.question,
        database: db.name.clone(),
        schema_elements: state.catalog.schema_elements(&db.name)?,
    };
    match state.translator.translate(&request).await {
        Ok(sql) => Ok(Json(json!({"sql": sql})).into_response()),
        Err(e @ TranslateError::NoMatch) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::BAD_GATEWAY, e.to_string())),
    }
}
