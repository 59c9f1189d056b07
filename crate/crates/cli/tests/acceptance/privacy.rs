//! Randomized friend graphs driven through the HTTP router, checked against
//! an independent model of who may see whose mood.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, Utc};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use happimeter_server::app::{App, ManualClock};
use happimeter_server::config::Config;
use happimeter_server::http::router;
use happimeter_server::store::Store;
use happimeter_server::weather::CachedWeather;

struct Pair {
    requester: usize,
    accepted: bool,
    /// share[0]: lower index shares with the higher; share[1]: the reverse.
    share: [bool; 2],
}

#[derive(Default)]
struct Model {
    pairs: BTreeMap<(usize, usize), Pair>,
}

fn key(x: usize, y: usize) -> (usize, usize) {
    (x.min(y), x.max(y))
}

impl Model {
    fn request(&mut self, x: usize, y: usize) {
        match self.pairs.get_mut(&key(x, y)) {
            None => {
                self.pairs.insert(key(x, y), Pair { requester: x, accepted: false, share: [true, true] });
            }
            Some(p) if !p.accepted && p.requester == y => p.accepted = true,
            Some(_) => {}
        }
    }

    fn accept(&mut self, x: usize, y: usize) -> bool {
        match self.pairs.get_mut(&key(x, y)) {
            Some(p) if p.accepted => true,
            Some(p) if p.requester == y => {
                p.accepted = true;
                true
            }
            _ => false,
        }
    }

    fn unfriend(&mut self, x: usize, y: usize) -> bool {
        self.pairs.remove(&key(x, y)).is_some()
    }

    fn set_sharing(&mut self, x: usize, y: usize, on: bool) -> bool {
        match self.pairs.get_mut(&key(x, y)) {
            Some(p) => {
                p.share[usize::from(x > y)] = on;
                true
            }
            None => false,
        }
    }

    fn visible_to(&self, viewer: usize) -> BTreeSet<usize> {
        self.pairs
            .iter()
            .filter(|(_, p)| p.accepted)
            .filter_map(|(&(lo, hi), p)| match () {
                _ if lo == viewer && p.share[1] => Some(hi),
                _ if hi == viewer && p.share[0] => Some(lo),
                _ => None,
            })
            .collect()
    }

    fn accepted(&self, x: usize, y: usize) -> bool {
        self.pairs.get(&key(x, y)).is_some_and(|p| p.accepted)
    }
}

struct Server {
    router: Router,
}

impl Server {
    fn new(names: &[String], now: DateTime<Utc>) -> Server {
        let mut cfg = Config::default();
        for n in names {
            cfg.tokens.insert(format!("tok-{n}"), n.clone());
        }
        let weather = CachedWeather::from_config(&cfg.weather).expect("stub weather");
        let app = App::new(cfg, Store::in_memory(), weather, Arc::new(ManualClock::new(now)));
        Server { router: router(Arc::new(app)) }
    }

    async fn call(&self, user: &str, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(path)
            .header("Authorization", format!("Bearer tok-{user}"))
            .body(body.map_or_else(Body::empty, |v| Body::from(v.to_string())))
            .expect("request");
        let resp = self.router.clone().oneshot(req).await.expect("infallible");
        let status = resp.status();
        let bytes = resp.into_body().collect().await.expect("body").to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }
}

fn index(name: &Value) -> usize {
    name.as_str().expect("friend id")[1..].parse().expect("p<i>")
}

pub struct Outcome {
    pub probes: usize,
    pub violations: Vec<String>,
}

pub async fn run(graphs: usize, probes_per_graph: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome { probes: 0, violations: Vec::new() };
    let now: DateTime<Utc> = "2017-05-01T12:00:00Z".parse().expect("timestamp");
    for g in 0..graphs {
        let n = rng.gen_range(3..=7);
        let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let s = Server::new(&names, now);

        let mut latest = Vec::new();
        for name in &names {
            let (p, a): (i64, i64) = (rng.gen_range(0..3), rng.gen_range(0..3));
            let at = now - Duration::minutes(rng.gen_range(1..120));
            let body = json!({ "timestamp": at.to_rfc3339(), "pleasance": p, "activation": a });
            let (st, _) = s.call(name, "POST", "/api/mood", Some(body)).await;
            assert_eq!(st, StatusCode::OK, "mood submission");
            latest.push((1 + (2 - p) + 3 * (2 - a), p, a));
        }

        let mut model = Model::default();
        for _ in 0..rng.gen_range(5..30) {
            let x = rng.gen_range(0..n);
            let mut y = rng.gen_range(0..n - 1);
            if y >= x {
                y += 1;
            }
            let (action, expect_ok, body) = match rng.gen_range(0..4) {
                0 => {
                    model.request(x, y);
                    ("request", true, json!({ "target": names[y] }))
                }
                1 => ("accept", model.accept(x, y), json!({ "target": names[y] })),
                2 => ("unfriend", model.unfriend(x, y), json!({ "target": names[y] })),
                _ => {
                    let on = rng.gen_bool(0.5);
                    ("set_sharing", model.set_sharing(x, y, on), json!({ "target": names[y], "enabled": on }))
                }
            };
            let (st, _) = s.call(&names[x], "POST", &format!("/api/friends/{action}"), Some(body)).await;
            if (st == StatusCode::OK) != expect_ok {
                out.violations.push(format!("graph {g}: {action} p{x}->p{y} returned {st}"));
            }
        }

        for _ in 0..probes_per_graph {
            let viewer = rng.gen_range(0..n);
            let allowed = model.visible_to(viewer);
            let me = &names[viewer];
            let (_, v) = s.call(me, "GET", "/api/friends/moods", None).await;
            let mut seen = BTreeSet::new();
            for entry in v.as_array().map(Vec::as_slice).unwrap_or_default() {
                let f = index(&entry["friend"]);
                if !allowed.contains(&f) {
                    out.violations.push(format!("graph {g}: p{viewer} saw p{f}"));
                }
                let (code, p, a) = latest[f];
                if entry["mood_state"] != code || entry["pleasance"] != p || entry["activation"] != a {
                    out.violations.push(format!("graph {g}: wrong mood for p{f}: {entry}"));
                }
                seen.insert(f);
            }
            if seen != allowed {
                out.violations.push(format!("graph {g}: p{viewer} saw {seen:?}, expected {allowed:?}"));
            }
            let (_, d) = s.call(me, "GET", "/api/stats/descriptive", None).await;
            if d["data"]["n"] != 1 {
                out.violations.push(format!("graph {g}: p{viewer} descriptive stats cover {}", d["data"]["n"]));
            }
            let (st, _) = s.call(me, "GET", "/api/stats/descriptive?scope=cohort", None).await;
            if st != StatusCode::FORBIDDEN {
                out.violations.push(format!("graph {g}: cohort stats returned {st} to a user"));
            }
            let (_, i) = s.call(me, "GET", "/api/insights", None).await;
            for inf in i["influence"]["influencers"].as_array().map(Vec::as_slice).unwrap_or_default() {
                let f = index(&inf["friend"]);
                if !model.accepted(viewer, f) {
                    out.violations.push(format!("graph {g}: p{viewer} insights name p{f}"));
                }
            }
            out.probes += 1;
        }
    }
    out
}
