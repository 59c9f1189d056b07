//! JSON-over-HTTP routes onto [`App`]. Handlers run the synchronous app code
//! on the blocking pool.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::app::{ApiError, App, ErrorKind, FriendAction, StatsScope};

type Params = Query<HashMap<String, String>>;

impl ErrorKind {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorKind::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
            ErrorKind::Forbidden => StatusCode::FORBIDDEN,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.kind.status(), Json(self)).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let t = v.strip_prefix("Bearer ").or_else(|| v.strip_prefix("bearer "))?;
    Some(t.trim().to_string())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(format!("invalid JSON body: {e}")))
}

async fn run<T, F>(app: Arc<App>, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&App) -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&app)).await {
        Ok(Ok(v)) => Json(v).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(format!("handler panicked: {e}")).into_response(),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BatchBody {
    Wrapped { samples: Vec<serde_json::Value> },
    Bare(Vec<serde_json::Value>),
}

async fn sensors_batch(State(app): State<Arc<App>>, headers: HeaderMap, body: Bytes) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        let items = match parse_body::<BatchBody>(&body)? {
            BatchBody::Wrapped { samples } => samples,
            BatchBody::Bare(v) => v,
        };
        app.ingest_sensor_batch(token.as_deref(), items)
    })
    .await
}

async fn mood(State(app): State<Arc<App>>, headers: HeaderMap, body: Bytes) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        app.submit_mood(token.as_deref(), parse_body(&body)?)
    })
    .await
}

async fn profile(State(app): State<Arc<App>>, headers: HeaderMap, body: Bytes) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        app.put_profile(token.as_deref(), parse_body(&body)?)
    })
    .await
}

async fn predicted(State(app): State<Arc<App>>, headers: HeaderMap) -> Response {
    let token = bearer(&headers);
    run(app, move |app| app.get_predicted_mood(token.as_deref())).await
}

async fn friends_moods(State(app): State<Arc<App>>, headers: HeaderMap) -> Response {
    let token = bearer(&headers);
    run(app, move |app| app.friends_moods(token.as_deref())).await
}

async fn friend_action(
    State(app): State<Arc<App>>,
    Path(action): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        let action = FriendAction::parse(&action)
            .ok_or_else(|| ApiError::not_found(format!("unknown friend action `{action}`")))?;
        app.friend_action(token.as_deref(), action, parse_body(&body)?)
    })
    .await
}

async fn insights(State(app): State<Arc<App>>, headers: HeaderMap, Query(q): Params) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        let top = match q.get("top") {
            Some(s) => s.parse().map_err(|_| ApiError::field("top", format!("not a count: `{s}`")))?,
            None => 5,
        };
        app.insights(token.as_deref(), q.get("target").map(String::as_str), top)
    })
    .await
}

fn stats_scope(q: &HashMap<String, String>) -> Result<Option<StatsScope>, ApiError> {
    match q.get("scope").map(String::as_str) {
        None => Ok(None),
        Some("me") => Ok(Some(StatsScope::Me)),
        Some("cohort") => Ok(Some(StatsScope::Cohort)),
        Some(s) => Err(ApiError::field("scope", format!("expected me or cohort, got `{s}`"))),
    }
}

async fn descriptive(State(app): State<Arc<App>>, headers: HeaderMap, Query(q): Params) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        app.stats_descriptive(token.as_deref(), stats_scope(&q)?)
    })
    .await
}

async fn hourly(State(app): State<Arc<App>>, headers: HeaderMap, Query(q): Params) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        app.stats_hourly(token.as_deref(), stats_scope(&q)?)
    })
    .await
}

async fn correlations(State(app): State<Arc<App>>, headers: HeaderMap, Query(q): Params) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        app.stats_correlations(token.as_deref(), stats_scope(&q)?)
    })
    .await
}

async fn schedule_today(State(app): State<Arc<App>>, headers: HeaderMap) -> Response {
    let token = bearer(&headers);
    run(app, move |app| app.schedule_today(token.as_deref())).await
}

#[derive(Deserialize, Default)]
struct RetrainBody {
    scope: Option<String>,
}

async fn retrain(State(app): State<Arc<App>>, headers: HeaderMap, Query(q): Params, body: Bytes) -> Response {
    let token = bearer(&headers);
    run(app, move |app| {
        app.authenticate(token.as_deref())?;
        let from_body = if body.is_empty() { RetrainBody::default() } else { parse_body::<RetrainBody>(&body)? };
        let scope = from_body.scope.or_else(|| q.get("scope").cloned()).unwrap_or_else(|| "all".into());
        app.retrain(token.as_deref(), &scope)
    })
    .await
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/api/sensors/batch", post(sensors_batch))
        .route("/api/mood", post(mood))
        .route("/api/mood/predicted", get(predicted))
        .route("/api/profile", put(profile))
        .route("/api/friends/moods", get(friends_moods))
        .route("/api/friends/{action}", post(friend_action))
        .route("/api/insights", get(insights))
        .route("/api/stats/descriptive", get(descriptive))
        .route("/api/stats/hourly", get(hourly))
        .route("/api/stats/correlations", get(correlations))
        .route("/api/schedule/today", get(schedule_today))
        .route("/api/admin/retrain", post(retrain))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(app)
}

pub async fn serve(app: Arc<App>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
