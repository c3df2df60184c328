//! HTTP front-end over [`Engine`].
//!
//! | method | path                         | success |
//! |--------|------------------------------|---------|
//! | POST   | `/v1/news`                   | 201 `{"id": ...}` |
//! | POST   | `/v1/events`                 | 202 |
//! | GET    | `/v1/recommendations`        | 200 `{"items": [...]}` |
//! | POST   | `/v1/users/{id}/follows`     | 204 |
//! | GET    | `/v1/users/{id}/profile`     | 200 profile snapshot |
//! | GET    | `/v1/health`                 | 200 `ok` |
//!
//! Errors carry `{"error": code, "field"?: name, "message": text}`.

use std::sync::Arc;
use std::time::SystemTime;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::config::ServiceConfig;
use crate::content::TopicLexicon;
use crate::engine::{Engine, EngineError, RecommendRequest};
use crate::geo::{GeoError, GeoPoint};
use crate::model::{EventKind, RawNews, Timestamp, UsageEvent};
use crate::rank::Recommendation;

/// Test-mode header that pins the request clock (RFC 3339).
pub const NOW_HEADER: &str = "x-hyperfeed-now";

pub const DEFAULT_LIMIT: usize = 20;
pub const MAX_LIMIT: usize = 100;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub test_mode: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<&'static str>,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, field: Option<&'static str>, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error,
                field,
                message: message.into(),
            },
        }
    }

    fn bad_field(field: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_field", Some(field), message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", None, r.body_text())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        use crate::model::Rejection;
        let msg = e.to_string();
        match e {
            EngineError::Invalid(Rejection::MissingField(f)) => {
                ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some(f), msg)
            }
            EngineError::Invalid(Rejection::OutOfRange(f)) => {
                ApiError::new(StatusCode::BAD_REQUEST, "out_of_range", Some(f), msg)
            }
            EngineError::DuplicateId(_) => ApiError::new(StatusCode::CONFLICT, "duplicate_id", Some("id"), msg),
            EngineError::UnknownNews(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_news", Some("news_id"), msg),
            EngineError::UnknownUser(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_user", None, msg),
            EngineError::SelfFollow(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "self_follow", Some("followee_id"), msg)
            }
            EngineError::Store(_) | EngineError::Filter(_) | EngineError::Config(_) => {
                tracing::error!(error = %msg, "internal failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", None, msg)
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/news", post(post_news))
        .route("/v1/events", post(post_event))
        .route("/v1/recommendations", get(recommendations))
        .route("/v1/users/{id}/follows", post(follow))
        .route("/v1/users/{id}/profile", get(profile))
        .with_state(state)
}

fn request_now(state: &AppState, headers: &HeaderMap) -> Result<Timestamp, ApiError> {
    if state.test_mode {
        if let Some(v) = headers.get(NOW_HEADER) {
            let text = v.to_str().map_err(|_| ApiError::bad_field("now", "header is not text"))?;
            return DateTime::parse_from_rfc3339(text)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::bad_field("now", e.to_string()));
        }
    }
    Ok(Utc::now())
}

async fn health() -> &'static str {
    "ok"
}

#[derive(Serialize)]
struct Created {
    id: String,
}

async fn post_news(State(state): State<AppState>, body: Result<Json<RawNews>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(raw) = body?;
    let id = state.engine.post_news(raw)?;
    Ok((StatusCode::CREATED, Json(Created { id })).into_response())
}

#[derive(Deserialize)]
struct RawEvent {
    user_id: Option<String>,
    news_id: Option<String>,
    kind: Option<String>,
    at: Option<String>,
    location: Option<GeoPoint>,
}

async fn post_event(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<RawEvent>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let Json(raw) = body?;
    let user_id = raw
        .user_id
        .filter(|u| !u.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some("user_id"), "user_id is required"))?;
    let news_id = raw
        .news_id
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some("news_id"), "news_id is required"))?;
    let kind = raw
        .kind
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some("kind"), "kind is required"))?;
    let kind: EventKind = kind
        .parse()
        .map_err(|e: crate::model::UnknownKind| ApiError::new(StatusCode::BAD_REQUEST, "invalid_kind", Some("kind"), e.to_string()))?;
    let at = match raw.at {
        Some(text) => DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "out_of_range", Some("at"), e.to_string()))?,
        None => request_now(&state, &headers)?,
    };
    state.engine.post_event(UsageEvent {
        user_id,
        news_id,
        kind,
        at,
        location: raw.location,
    })?;
    Ok(StatusCode::ACCEPTED)
}

#[derive(Deserialize)]
struct RecoQuery {
    user_id: Option<String>,
    lat: Option<String>,
    lon: Option<String>,
    limit: Option<String>,
    seed: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct RecoResponse {
    pub items: Vec<Recommendation>,
}

fn parse_param<T: std::str::FromStr>(value: Option<String>, field: &'static str) -> Result<Option<T>, ApiError> {
    value
        .map(|v| v.trim().parse::<T>().map_err(|_| ApiError::bad_field(field, format!("cannot parse `{v}`"))))
        .transpose()
}

async fn recommendations(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<RecoQuery>,
) -> Result<Json<RecoResponse>, ApiError> {
    let user_id = q
        .user_id
        .filter(|u| !u.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some("user_id"), "user_id is required"))?;
    let lat: f64 = parse_param(q.lat, "lat")?
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some("lat"), "lat is required"))?;
    let lon: f64 = parse_param(q.lon, "lon")?
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_field", Some("lon"), "lon is required"))?;
    let location = GeoPoint::new(lat, lon).map_err(|e| match e {
        GeoError::Latitude => ApiError::new(StatusCode::BAD_REQUEST, "out_of_range", Some("lat"), e.to_string()),
        GeoError::Longitude => ApiError::new(StatusCode::BAD_REQUEST, "out_of_range", Some("lon"), e.to_string()),
    })?;
    let limit: usize = parse_param(q.limit, "limit")?.unwrap_or(DEFAULT_LIMIT);
    if !(1..=MAX_LIMIT).contains(&limit) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "out_of_range",
            Some("limit"),
            format!("limit must be in 1..={MAX_LIMIT}"),
        ));
    }
    let seed = parse_param(q.seed, "seed")?
        .or(state.seed)
        .unwrap_or_else(rand::random);
    let now = request_now(&state, &headers)?;
    let items = state.engine.recommend(&RecommendRequest {
        user_id,
        location,
        now,
        limit,
        seed,
    })?;
    Ok(Json(RecoResponse { items }))
}

#[derive(Deserialize)]
struct FollowBody {
    followee_id: String,
}

async fn follow(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FollowBody>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let Json(body) = body?;
    state.engine.follow(&id, &body.followee_id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn profile(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match state.engine.profile(&id) {
        Some(p) => Ok(Json(p).into_response()),
        None => Err(EngineError::UnknownUser(id).into()),
    }
}

/// Builds the engine described by `cfg`.
pub fn build_engine(cfg: &ServiceConfig) -> Result<Engine, Box<dyn std::error::Error + Send + Sync>> {
    let lexicon = match &cfg.lexicon {
        Some(path) => TopicLexicon::load(path)?,
        None => TopicLexicon::default(),
    };
    Ok(match &cfg.data_dir {
        Some(dir) => Engine::open(cfg.engine.clone(), lexicon, dir)?,
        None => Engine::new(cfg.engine.clone(), lexicon)?,
    })
}

fn meta_mtime(engine: &Engine) -> Option<SystemTime> {
    let layout = engine.layout()?;
    std::fs::metadata(layout.batch_meta()).and_then(|m| m.modified()).ok()
}

/// Swaps in a newer batch whenever `batch_meta.json` changes.
async fn watch_batches(engine: Arc<Engine>, every_secs: u64) {
    let mut seen = meta_mtime(&engine);
    let mut tick = tokio::time::interval(std::time::Duration::from_secs(every_secs));
    loop {
        tick.tick().await;
        let current = meta_mtime(&engine);
        if current.is_none() || current == seen {
            continue;
        }
        seen = current;
        let Some(layout) = engine.layout().cloned() else { return };
        match batch::load_snapshot(&layout) {
            Ok(Some(snap)) => {
                tracing::info!(batch_at = ?snap.batch_at, "installed new batch tables");
                engine.install_batch(snap);
            }
            Ok(None) => {}
            Err(e) => tracing::warn!(error = %e, "could not load batch tables"),
        }
    }
}

/// Runs the HTTP service until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let engine = Arc::new(build_engine(&cfg)?);
    tracing::info!(
        news = engine.news_count(),
        events = engine.event_count(),
        bind = %cfg.bind,
        "engine ready"
    );
    if cfg.data_dir.is_some() && cfg.batch_reload_secs > 0 {
        tokio::spawn(watch_batches(engine.clone(), cfg.batch_reload_secs));
    }
    let app = router(AppState {
        engine,
        test_mode: cfg.test_mode,
        seed: cfg.seed,
    });
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
