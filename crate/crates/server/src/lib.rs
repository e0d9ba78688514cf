//! HTTP JSON service over the manual store and answer pipeline.
//!
//! | method | path                          | success |
//! |--------|-------------------------------|---------|
//! | POST   | `/v1/manuals` (multipart)     | 201 new, 200 already stored |
//! | GET    | `/v1/manuals?offset&limit`    | 200 `{"total","items"}` |
//! | GET    | `/v1/manuals/{id}`            | 200 |
//! | GET    | `/v1/languages`               | 200 |
//! | POST   | `/v1/sessions`                | 201 |
//! | GET    | `/v1/sessions/{id}`           | 200 |
//! | POST   | `/v1/sessions/{id}/questions` | 200 |
//! | GET    | `/healthz`                    | 200 |
//!
//! Errors are always [`ApiError`] bodies. When `MB_API_TOKEN` is set, every
//! POST needs `Authorization: Bearer <token>`.

mod error;

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use manualbridge_core::config::{ConfigError, Settings};
use manualbridge_core::providers::{ProbeStatus, PROBE_TIMEOUT};
use manualbridge_core::qa::{Answer, QaEngine};
use manualbridge_core::store::{ManualDocument, ManualStore, NewManual, StoreError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::{ApiError, ERROR_CODES};

const DEFAULT_PAGE_LIMIT: usize = 20;
const MAX_PAGE_LIMIT: usize = 200;
/// Room for multipart boundaries and the title field on top of the file itself.
const MULTIPART_OVERHEAD: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

struct Inner {
    store: ManualStore,
    engine: QaEngine,
    api_token: Option<String>,
    max_upload_bytes: usize,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(store: ManualStore, engine: QaEngine, api_token: Option<String>, max_upload_bytes: usize) -> Self {
        Self(Arc::new(Inner {
            store,
            engine,
            api_token,
            max_upload_bytes,
        }))
    }

    pub fn from_settings(settings: &Settings) -> Result<Self, ServerError> {
        let store = ManualStore::open(&settings.store_dir)?;
        let engine = settings.engine()?;
        Ok(Self::new(
            store,
            engine,
            settings.api_token.clone(),
            settings.max_upload_bytes,
        ))
    }

    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let Some(expected) = &self.0.api_token else {
            return Ok(());
        };
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .unwrap_or("");
        if constant_time_eq(presented.as_bytes(), expected.as_bytes()) {
            Ok(())
        } else {
            Err(ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or invalid bearer token",
            ))
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let upload_limit = state.0.max_upload_bytes.saturating_add(MULTIPART_OVERHEAD);
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]);
    let cors = if cors_origins.is_empty() {
        cors.allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = cors_origins
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        cors.allow_origin(AllowOrigin::list(origins))
    };
    Router::new()
        .route(
            "/v1/manuals",
            post(upload_manual)
                .layer(DefaultBodyLimit::max(upload_limit))
                .get(list_manuals),
        )
        .route("/v1/manuals/{id}", get(get_manual))
        .route("/v1/languages", get(languages))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/questions", post(ask))
        .route("/healthz", get(health))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed on this endpoint",
            )
        })
        .layer(cors)
        .with_state(state)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("invalid JSON body: {e}")))
}

async fn upload_manual(
    State(state): State<AppState>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> Result<Response, ApiError> {
    state.authorize(&headers)?;
    let limit = state.0.max_upload_bytes;
    let multipart_error = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::too_large(limit)
        } else {
            ApiError::invalid(format!("malformed multipart body: {}", e.body_text()))
        }
    };
    let mut file: Option<(Option<String>, Bytes)> = None;
    let mut title = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("file") => {
                let filename = field.file_name().map(str::to_string);
                let bytes = field.bytes().await.map_err(multipart_error)?;
                file = Some((filename, bytes));
            }
            Some("title") => title = Some(field.text().await.map_err(multipart_error)?),
            _ => {}
        }
    }
    let (filename, bytes) = file.ok_or_else(|| ApiError::invalid("multipart field \"file\" is required"))?;
    if bytes.len() > limit {
        return Err(ApiError::too_large(limit));
    }
    if bytes.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "no_extractable_text",
            "uploaded file is empty",
        ));
    }
    let reg = blocking(move || {
        let upload = NewManual {
            bytes: &bytes,
            title,
            filename,
            format: None,
        };
        let embedder = state.0.engine.providers.embedder.clone();
        Ok(state.0.store.register_manual(&upload, embedder.as_ref())?)
    })
    .await?;
    let status = if reg.created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(reg.manual)).into_response())
}

#[derive(Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Serialize)]
struct ManualPage {
    total: usize,
    items: Vec<ManualDocument>,
}

async fn list_manuals(
    State(state): State<AppState>,
    query: Result<Query<PageQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<ManualPage>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::invalid(e.body_text()))?;
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE_LIMIT);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(ApiError::invalid(format!("limit must be between 1 and {MAX_PAGE_LIMIT}")));
    }
    let (total, items) = blocking(move || Ok(state.0.store.list_manuals(offset, limit)?)).await?;
    Ok(Json(ManualPage { total, items }))
}

async fn get_manual(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ManualDocument>, ApiError> {
    Ok(Json(blocking(move || Ok(state.0.store.get_manual(&id)?)).await?))
}

#[derive(Serialize)]
struct LanguageEntry<'a> {
    code: &'a str,
    name: &'a str,
}

async fn languages(State(state): State<AppState>) -> Response {
    let registry = &state.0.engine.registry;
    let languages: Vec<LanguageEntry<'_>> = registry
        .languages()
        .map(|l| LanguageEntry {
            code: &l.code,
            name: &l.name,
        })
        .collect();
    Json(serde_json::json!({
        "default_language": registry.default_language(),
        "languages": languages,
    }))
    .into_response()
}

#[derive(Deserialize)]
struct NewSession {
    manual_id: String,
    language: Option<String>,
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    state.authorize(&headers)?;
    let req: NewSession = parse_json(&body)?;
    let session = blocking(move || {
        let registry = &state.0.engine.registry;
        let language = req
            .language
            .unwrap_or_else(|| registry.default_language().code().to_string());
        Ok(state.0.store.create_session(&req.manual_id, &language, registry)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = blocking(move || Ok(state.0.store.load_session(&id)?)).await?;
    Ok(Json(session).into_response())
}

#[derive(Deserialize)]
struct Question {
    text: String,
}

async fn ask(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    state.authorize(&headers)?;
    let question: Question = parse_json(&body)?;
    let answer: Answer = blocking(move || {
        let session = state.0.store.load_session(&id)?;
        if question.text.trim().is_empty() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "empty_text",
                "question text is empty",
            ));
        }
        let manual = state.0.store.indexed_manual(&session.manual_id)?;
        let answer = state
            .0
            .engine
            .answer_question(&manual, &session.user_language, &question.text)?;
        state.0.store.append_exchange(&id, &question.text, &answer)?;
        Ok(answer)
    })
    .await?;
    let upstream_failure = match answer.verdict.reason.as_str() {
        "provider_unreachable" => Some("provider_unreachable"),
        "provider_bad_response" | "unsupported_pair" => Some("provider_error"),
        _ => None,
    };
    match upstream_failure {
        Some(code) => {
            let mut err = ApiError::new(StatusCode::BAD_GATEWAY, code, answer.localized_text.clone());
            err.answer = Some(Box::new(answer));
            Err(err)
        }
        None => Ok(Json(answer).into_response()),
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    providers: BTreeMap<&'static str, ProbeStatus>,
}

/// Probes run in parallel and each is cut off at the probe timeout.
async fn health(State(state): State<AppState>) -> Json<Health> {
    let providers = &state.0.engine.providers;
    let embedder = providers.embedder.clone();
    let translator = providers.translator.clone();
    let generator = providers.generator.clone();
    let (e, t, g) = tokio::join!(
        probe(move || embedder.probe()),
        probe(move || translator.probe()),
        probe(move || generator.probe()),
    );
    Json(Health {
        status: "ok",
        providers: BTreeMap::from([("embedder", e), ("translator", t), ("generator", g)]),
    })
}

async fn probe(f: impl FnOnce() -> ProbeStatus + Send + 'static) -> ProbeStatus {
    match tokio::time::timeout(PROBE_TIMEOUT, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(status)) => status,
        _ => ProbeStatus::Degraded,
    }
}

pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener, ServerError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.to_string(),
            source,
        })
}

/// Serve until `shutdown` resolves; requests already accepted run to completion.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
