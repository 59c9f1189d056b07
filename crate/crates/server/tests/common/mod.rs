#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use happimeter_server::app::{App, ManualClock};
use happimeter_server::config::Config;
use happimeter_server::http::router;
use happimeter_server::store::Store;
use happimeter_server::weather::CachedWeather;

pub const ADMIN: &str = "admin-token";

pub fn t(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
}

pub fn token(user: &str) -> String {
    format!("tok-{user}")
}

/// Small forest so training in tests stays fast.
pub fn test_config(users: &[&str]) -> Config {
    let mut c = Config::default();
    for u in users {
        c.tokens.insert(token(u), u.to_string());
    }
    c.admin_tokens.push(ADMIN.into());
    c.forest.n_trees = 5;
    c.forest.min_leaf = 3;
    c.folds = 3;
    c
}

pub struct TestServer {
    pub app: Arc<App>,
    pub clock: Arc<ManualClock>,
    pub router: Router,
}

impl TestServer {
    pub fn new(config: Config, store: Store, now: DateTime<Utc>) -> TestServer {
        let clock = Arc::new(ManualClock::new(now));
        let weather = CachedWeather::from_config(&config.weather).unwrap();
        let app = Arc::new(App::new(config, store, weather, clock.clone()));
        TestServer { router: router(app.clone()), app, clock }
    }

    pub fn with_users(users: &[&str], now: DateTime<Utc>) -> TestServer {
        TestServer::new(test_config(users), Store::in_memory(), now)
    }

    pub async fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let body = match body {
            Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
            None => Body::empty(),
        };
        let resp = self.router.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, v)
    }

    pub async fn as_user(&self, user: &str, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        self.call(method, path, Some(&token(user)), body).await
    }
}

pub fn sample_json(at: DateTime<Utc>, hr: f64) -> Value {
    json!({
        "timestamp": at.to_rfc3339(),
        "heart_rate": hr,
        "activity": 2,
        "vmc": 120.0,
        "light_level": 3,
        "lat": 47.37,
        "lon": 8.54,
    })
}

/// Samples every 15 minutes over `[from, from + n*15min)`.
pub fn samples(from: DateTime<Utc>, n: usize) -> Vec<Value> {
    (0..n).map(|i| sample_json(from + Duration::minutes(15 * i as i64), 60.0 + i as f64)).collect()
}
