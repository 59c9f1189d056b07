//! Request handling independent of the HTTP layer. Every operation takes the
//! caller's bearer token and returns a serializable value or an [`ApiError`].

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use happimeter_core::analytics::{
    correlation_matrix, descriptive_stats, hourly_profile, table3_columns, CorrelationMatrix, DescriptiveReport,
    HourlyProfile, InfluenceScore,
};
use happimeter_core::domain::{
    BigFive, Friendship, FriendshipStatus, Gender, Level, MoodInput, MoodSource, ParticipantProfile, SensorSample,
    UserId, ValidationError, FUTURE_SKEW,
};
use happimeter_core::featurize::{
    build_features, build_labeled_example, parse_zone, DropReason, FeatureVector, LabeledExample, Zone,
};
use happimeter_core::forest::{
    cross_validate, feature_importance, train_forest, Dataset, FeatureImportance, Scope, Target,
};
use happimeter_core::pipeline::{influence_scores, join_examples, zones_from_profiles};
use happimeter_core::sampling::{due_prompt, generate_schedule, PromptId};

use crate::config::Config;
use crate::csvio::Bundle;
use crate::registry::{Registry, ScopeEntry, TrainedModel};
use crate::store::{Event, Snapshot, Store, StoreError};
use crate::weather::CachedWeather;

pub const MAX_BATCH: usize = 1000;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Settable clock for tests and replays.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().expect("clock") = at;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Unauthorized,
    BadRequest,
    Forbidden,
    NotFound,
    Conflict,
    Unavailable,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
    pub field_errors: Vec<FieldError>,
}

impl ApiError {
    pub fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        ApiError { kind, code: code.into(), message: message.into(), field_errors: Vec::new() }
    }

    pub fn unauthorized() -> Self {
        ApiError::new(ErrorKind::Unauthorized, "unauthorized", "missing or unknown bearer token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::Forbidden, "forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::NotFound, "not_found", message)
    }

    pub fn validation(errors: Vec<FieldError>) -> Self {
        let message = errors.iter().map(|e| format!("{}: {}", e.field, e.reason)).collect::<Vec<_>>().join("; ");
        ApiError { field_errors: errors, ..ApiError::new(ErrorKind::BadRequest, "validation_error", message) }
    }

    pub fn field(field: &str, reason: impl Into<String>) -> Self {
        ApiError::validation(vec![FieldError { index: None, field: field.into(), reason: reason.into() }])
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        let message = message.into();
        ApiError {
            field_errors: vec![FieldError { index: None, field: "body".into(), reason: message.clone() }],
            ..ApiError::new(ErrorKind::BadRequest, "malformed_body", message)
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::Internal, "internal", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError::field(e.field(), e.to_string())
    }
}

fn field_error(index: Option<usize>, e: &ValidationError) -> FieldError {
    FieldError { index, field: e.field().into(), reason: e.to_string() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Principal {
    User(UserId),
    Admin,
}

// ---- request bodies ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorBody {
    pub timestamp: DateTime<Utc>,
    pub heart_rate: f64,
    pub activity: i64,
    pub vmc: f64,
    pub light_level: i64,
    #[serde(alias = "latitude")]
    pub lat: f64,
    #[serde(alias = "longitude")]
    pub lon: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MoodBody {
    pub timestamp: Option<DateTime<Utc>>,
    pub pleasance: i64,
    pub activation: i64,
    pub source: Option<MoodSource>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FriendBody {
    pub target: String,
    pub enabled: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProfileBody {
    pub age: Option<f64>,
    #[serde(default)]
    pub gender: Gender,
    pub big_five: Option<BigFive>,
    pub timezone: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FriendAction {
    Request,
    Accept,
    Unfriend,
    SetSharing,
}

impl FriendAction {
    pub fn parse(s: &str) -> Option<FriendAction> {
        match s {
            "request" => Some(FriendAction::Request),
            "accept" => Some(FriendAction::Accept),
            "unfriend" => Some(FriendAction::Unfriend),
            "set_sharing" | "set-sharing" => Some(FriendAction::SetSharing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsScope {
    Me,
    Cohort,
}

// ---- responses ----

#[derive(Debug, Clone, Serialize)]
pub struct BatchResult {
    pub accepted: usize,
    /// Accepted samples identical to what was already stored.
    pub unchanged: usize,
    pub rejected: Vec<FieldError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MoodResult {
    pub id: u64,
    pub duplicate: bool,
    pub mood_state: u8,
    pub prompt_answered: Option<PromptId>,
    pub example: Option<LabeledExample>,
    pub not_joined_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictedMood {
    pub pleasance: u8,
    pub activation: u8,
    pub mood_state: u8,
    pub mood_label: String,
    /// `general` or `individual:<user>`.
    pub model_scope: String,
    pub fallback_to_general: bool,
    pub trained_at: DateTime<Utc>,
    pub as_of: DateTime<Utc>,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Serialize)]
pub struct FriendMood {
    pub friend: UserId,
    /// `input`, `prediction`, or absent when neither is available.
    pub kind: Option<String>,
    pub pleasance: Option<u8>,
    pub activation: Option<u8>,
    pub mood_state: Option<u8>,
    pub mood_label: Option<String>,
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FriendResult {
    pub action: FriendAction,
    pub friendship: Option<Friendship>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetSummary {
    pub target: Target,
    pub accuracy: Option<f64>,
    pub kappa: Option<f64>,
    pub stratified: Option<bool>,
    pub cv_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScopeResult {
    pub scope: String,
    pub trained: bool,
    pub reason: Option<String>,
    pub n_examples: usize,
    pub targets: Vec<TargetSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrainReport {
    pub trained_at: DateTime<Utc>,
    pub n_moods: usize,
    pub n_joined: usize,
    pub dropped: BTreeMap<String, usize>,
    pub scopes: Vec<ScopeResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportanceSection {
    pub target: Target,
    pub model_scope: Option<String>,
    pub fallback_to_general: bool,
    pub by_impurity_decrease: Vec<FeatureImportance>,
    pub by_node_count: Vec<FeatureImportance>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceSection {
    pub influencers: Vec<InfluenceScore>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Insights {
    pub importance: ImportanceSection,
    pub influence: InfluenceSection,
}

#[derive(Debug, Clone, Serialize)]
pub struct Section<T> {
    pub scope: StatsScope,
    pub data: Option<T>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PromptView {
    pub id: PromptId,
    pub local: chrono::NaiveDateTime,
    pub at: DateTime<Utc>,
    /// `upcoming`, `due`, `answered` or `expired`.
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TodaySchedule {
    pub date: chrono::NaiveDate,
    pub timezone: String,
    pub prompts: Vec<PromptView>,
    pub due: Option<PromptId>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportSummary {
    pub sensors: usize,
    pub moods: usize,
    pub profiles: usize,
    pub friendships: usize,
    pub weather: usize,
}

pub struct App {
    pub config: Config,
    pub store: Store,
    pub weather: CachedWeather,
    pub registry: Registry,
    clock: Arc<dyn Clock>,
}

fn zone_of(snap: &Snapshot, user: &UserId) -> (Zone, String) {
    match snap.profiles.get(user) {
        Some(p) => (parse_zone(&p.timezone).unwrap_or_else(|_| Zone::utc()), p.timezone.clone()),
        None => (Zone::utc(), "UTC".into()),
    }
}

impl App {
    pub fn new(config: Config, store: Store, weather: CachedWeather, clock: Arc<dyn Clock>) -> App {
        App { config, store, weather, registry: Registry::new(), clock }
    }

    /// Store and weather built from the config (event log under `data_dir`
    /// when set, in memory otherwise).
    pub fn from_config(config: Config) -> Result<App, String> {
        let store = match &config.data_dir {
            Some(d) => Store::open(d).map_err(|e| e.to_string())?,
            None => Store::in_memory(),
        };
        let weather = CachedWeather::from_config(&config.weather)?;
        Ok(App::new(config, store, weather, Arc::new(SystemClock)))
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn authenticate(&self, token: Option<&str>) -> Result<Principal, ApiError> {
        let token = token.ok_or_else(ApiError::unauthorized)?;
        if self.config.admin_tokens.iter().any(|t| t == token) {
            return Ok(Principal::Admin);
        }
        let user = self.config.tokens.get(token).ok_or_else(ApiError::unauthorized)?;
        UserId::new(user.clone()).map(Principal::User).map_err(|_| ApiError::unauthorized())
    }

    fn user(&self, token: Option<&str>) -> Result<UserId, ApiError> {
        match self.authenticate(token)? {
            Principal::User(u) => Ok(u),
            Principal::Admin => Err(ApiError::forbidden("admin tokens cannot act as a participant")),
        }
    }

    fn admin(&self, token: Option<&str>) -> Result<(), ApiError> {
        match self.authenticate(token)? {
            Principal::Admin => Ok(()),
            Principal::User(_) => Err(ApiError::forbidden("admin credential required")),
        }
    }

    /// Users with a token or any stored data.
    fn known_user(&self, snap: &Snapshot, user: &UserId) -> bool {
        self.config.tokens.values().any(|u| u == user.as_str()) || snap.users().contains(user)
    }

    // ---- ingestion ----

    pub fn ingest_sensor_batch(&self, token: Option<&str>, items: Vec<serde_json::Value>) -> Result<BatchResult, ApiError> {
        let user = self.user(token)?;
        if items.len() > MAX_BATCH {
            return Err(ApiError::field("samples", format!("batch of {} exceeds {MAX_BATCH} samples", items.len())));
        }
        let now = self.now();
        let mut rejected = Vec::new();
        let mut valid = Vec::new();
        for (i, item) in items.into_iter().enumerate() {
            match self.parse_sample(&user, item, now) {
                Ok(s) => valid.push(s),
                Err(e) => rejected.push(FieldError { index: Some(i), ..e }),
            }
        }
        let accepted = valid.len();
        let unchanged = self.store.transact(|snap| {
            let mut batch: BTreeMap<DateTime<Utc>, SensorSample> = BTreeMap::new();
            for s in valid {
                batch.insert(s.timestamp, s);
            }
            let stored = snap.sensors.get(&user);
            let mut unchanged = 0;
            let mut events = Vec::new();
            for (ts, s) in batch {
                if stored.and_then(|m| m.get(&ts)) == Some(&s) {
                    unchanged += 1;
                } else {
                    events.push(Event::Sensor(s));
                }
            }
            (events, unchanged)
        })?;
        Ok(BatchResult { accepted, unchanged, rejected })
    }

    fn parse_sample(&self, user: &UserId, item: serde_json::Value, now: DateTime<Utc>) -> Result<SensorSample, FieldError> {
        let body: SensorBody = serde_json::from_value(item)
            .map_err(|e| FieldError { index: None, field: "sample".into(), reason: e.to_string() })?;
        let small = |field: &str, v: i64| {
            u8::try_from(v).map_err(|_| FieldError {
                index: None,
                field: field.into(),
                reason: format!("{field}: value {v} outside {{0..5}}"),
            })
        };
        let s = SensorSample {
            user: user.clone(),
            timestamp: body.timestamp,
            heart_rate: body.heart_rate,
            activity: small("activity", body.activity)?,
            vmc: body.vmc,
            light_level: small("light_level", body.light_level)?,
            latitude: body.lat,
            longitude: body.lon,
        };
        s.validate().map_err(|e| field_error(None, &e))?;
        if s.timestamp > now + FUTURE_SKEW {
            return Err(FieldError {
                index: None,
                field: "timestamp".into(),
                reason: format!("{} is in the future", s.timestamp.to_rfc3339()),
            });
        }
        Ok(s)
    }

    pub fn submit_mood(&self, token: Option<&str>, body: MoodBody) -> Result<MoodResult, ApiError> {
        let user = self.user(token)?;
        let now = self.now();
        let mut errors = Vec::new();
        let p = Level::new("pleasance", body.pleasance).map_err(|e| errors.push(field_error(None, &e))).ok();
        let a = Level::new("activation", body.activation).map_err(|e| errors.push(field_error(None, &e))).ok();
        let (Some(pleasance), Some(activation)) = (p, a) else {
            return Err(ApiError::validation(errors));
        };
        let input = MoodInput {
            user: user.clone(),
            timestamp: body.timestamp.unwrap_or(now),
            pleasance,
            activation,
            source: body.source.unwrap_or(MoodSource::Manual),
        };
        input.validate(now)?;

        let sampling = &self.config.sampling;
        let seed = self.config.seed;
        let (id, duplicate, prompt_answered) = self.store.transact(|snap| {
            if let Some(m) = snap.moods.get(&user).and_then(|v| v.iter().find(|m| m.input == input)) {
                return (Vec::new(), (m.id, true, None));
            }
            let id = snap.next_mood_id;
            let mut events = vec![Event::Mood { id, input: input.clone() }];
            let mut answered = None;
            if input.source == MoodSource::Prompted {
                let (zone, _) = zone_of(snap, &user);
                let date = zone.local(input.timestamp).date();
                if let Ok(schedule) = generate_schedule(&user, date, &zone, sampling, seed) {
                    let done = snap.answered.get(&user).cloned().unwrap_or_default();
                    answered = due_prompt(input.timestamp, &schedule, &done, Duration::minutes(sampling.expiry_minutes));
                    if let Some(prompt) = answered {
                        events.push(Event::PromptAnswered { user: user.clone(), prompt, mood_id: id });
                    }
                }
            }
            (events, (id, false, answered))
        })?;

        let (samples, zone) = {
            let snap = self.store.read();
            (snap.sensor_history(&user), zone_of(&snap, &user).0)
        };
        let (example, not_joined_reason) =
            match build_labeled_example(&input, &samples, &self.weather, &zone, &self.config.featurize) {
                Ok(Ok(ex)) => (Some(ex), None),
                Ok(Err(r)) => (None, Some(r.as_str().to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
        Ok(MoodResult {
            id,
            duplicate,
            mood_state: input.mood_state().code(),
            prompt_answered,
            example,
            not_joined_reason,
        })
    }

    pub fn put_profile(&self, token: Option<&str>, body: ProfileBody) -> Result<ParticipantProfile, ApiError> {
        let user = self.user(token)?;
        let profile = ParticipantProfile {
            user,
            age: body.age,
            gender: body.gender,
            big_five: body.big_five,
            timezone: body.timezone.unwrap_or_else(happimeter_core::domain::default_timezone),
        };
        profile.validate()?;
        parse_zone(&profile.timezone).map_err(|e| ApiError::field("timezone", e.to_string()))?;
        self.store.append(vec![Event::Profile(profile.clone())])?;
        Ok(profile)
    }

    // ---- prediction ----

    fn predict_for(&self, user: &UserId, now: DateTime<Utc>) -> Result<PredictedMood, ApiError> {
        let (samples, zone) = {
            let snap = self.store.read();
            (snap.sensor_history(user), zone_of(&snap, user).0)
        };
        let features = match build_features(now, &samples, &self.weather, &zone, &self.config.featurize) {
            Ok(Ok((f, _))) => f,
            Ok(Err(DropReason::NoSensorWindow)) => {
                return Err(ApiError::new(
                    ErrorKind::Conflict,
                    "no_current_features",
                    format!("no sensor sample within {} min of now", self.config.featurize.join_tolerance_minutes),
                ))
            }
            Ok(Err(DropReason::MissingWeather)) => {
                return Err(ApiError::new(ErrorKind::Unavailable, "weather_unavailable", "weather enrichment unavailable"))
            }
            Err(e) => return Err(ApiError::internal(e.to_string())),
        };
        let (entry, fallback) = self
            .registry
            .resolve(user)
            .ok_or_else(|| ApiError::new(ErrorKind::Unavailable, "no_model", "no model has been trained yet"))?;
        let row = features.to_array();
        let label = |t: Target| -> Result<u8, ApiError> {
            let m = entry.model(t).ok_or_else(|| ApiError::internal(format!("registry entry lacks {}", t.as_str())))?;
            m.predict(&row).map(|p| p.label).map_err(|e| ApiError::internal(e.to_string()))
        };
        let mood_state = label(Target::MoodState)?;
        Ok(PredictedMood {
            pleasance: label(Target::Pleasance)?,
            activation: label(Target::Activation)?,
            mood_state,
            mood_label: self.config.mood_label(mood_state),
            model_scope: entry.scope.to_string(),
            fallback_to_general: fallback,
            trained_at: entry.trained_at,
            as_of: now,
            features,
        })
    }

    pub fn get_predicted_mood(&self, token: Option<&str>) -> Result<PredictedMood, ApiError> {
        let user = self.user(token)?;
        self.predict_for(&user, self.now())
    }

    // ---- friends ----

    pub fn friends_moods(&self, token: Option<&str>) -> Result<Vec<FriendMood>, ApiError> {
        let user = self.user(token)?;
        let now = self.now();
        let visible: Vec<(UserId, Option<MoodInput>)> = {
            let snap = self.store.read();
            snap.friendships_of(&user)
                .filter_map(|f| {
                    let other = f.other(&user)?;
                    f.shares(other, &user).then(|| other.clone())
                })
                .map(|friend| {
                    let latest = snap
                        .moods
                        .get(&friend)
                        .and_then(|v| v.iter().max_by_key(|m| (m.input.timestamp, m.id)))
                        .map(|m| m.input.clone());
                    (friend, latest)
                })
                .collect()
        };
        let mut out = Vec::with_capacity(visible.len());
        for (friend, latest) in visible {
            let entry = match latest {
                Some(m) => FriendMood {
                    friend,
                    kind: Some("input".into()),
                    pleasance: Some(m.pleasance.value()),
                    activation: Some(m.activation.value()),
                    mood_state: Some(m.mood_state().code()),
                    mood_label: Some(self.config.mood_label(m.mood_state().code())),
                    timestamp: Some(m.timestamp),
                },
                None => match self.predict_for(&friend, now) {
                    Ok(p) => FriendMood {
                        friend,
                        kind: Some("prediction".into()),
                        pleasance: Some(p.pleasance),
                        activation: Some(p.activation),
                        mood_state: Some(p.mood_state),
                        mood_label: Some(p.mood_label),
                        timestamp: Some(p.as_of),
                    },
                    Err(_) => FriendMood {
                        friend,
                        kind: None,
                        pleasance: None,
                        activation: None,
                        mood_state: None,
                        mood_label: None,
                        timestamp: None,
                    },
                },
            };
            out.push(entry);
        }
        Ok(out)
    }

    pub fn friend_action(&self, token: Option<&str>, action: FriendAction, body: FriendBody) -> Result<FriendResult, ApiError> {
        let user = self.user(token)?;
        let target = UserId::new(body.target.clone()).map_err(|e| ApiError::field("target", e.to_string()))?;
        if target == user {
            return Err(ApiError::field("target", "cannot target yourself"));
        }
        let friendship = self.store.transact(|snap| -> (Vec<Event>, Result<Option<Friendship>, ApiError>) {
            if !self.known_user(snap, &target) {
                return (Vec::new(), Err(ApiError::not_found(format!("unknown user `{target}`"))));
            }
            let existing = snap.friendship(&user, &target).cloned();
            match action {
                FriendAction::Request => match existing {
                    // the target already asked us: requesting back accepts
                    Some(mut f) if f.status == FriendshipStatus::Pending && f.b == user => {
                        f.status = FriendshipStatus::Accepted;
                        (vec![Event::Friendship(f.clone())], Ok(Some(f)))
                    }
                    Some(f) => (Vec::new(), Ok(Some(f))),
                    None => match Friendship::request(user.clone(), target.clone()) {
                        Ok(f) => (vec![Event::Friendship(f.clone())], Ok(Some(f))),
                        Err(e) => (Vec::new(), Err(e.into())),
                    },
                },
                FriendAction::Accept => match existing {
                    Some(mut f) if f.status == FriendshipStatus::Pending && f.b == user => {
                        f.status = FriendshipStatus::Accepted;
                        (vec![Event::Friendship(f.clone())], Ok(Some(f)))
                    }
                    Some(f) if f.status == FriendshipStatus::Accepted => (Vec::new(), Ok(Some(f))),
                    _ => (Vec::new(), Err(ApiError::not_found(format!("no friend request from `{target}`")))),
                },
                FriendAction::Unfriend => match existing {
                    Some(_) => (vec![Event::Unfriend { a: user.clone(), b: target.clone() }], Ok(None)),
                    None => (Vec::new(), Err(ApiError::not_found(format!("no friendship with `{target}`")))),
                },
                FriendAction::SetSharing => {
                    let Some(enabled) = body.enabled else {
                        return (Vec::new(), Err(ApiError::field("enabled", "required for set_sharing")));
                    };
                    match existing {
                        Some(mut f) => {
                            f.set_sharing(&user, enabled);
                            (vec![Event::Friendship(f.clone())], Ok(Some(f)))
                        }
                        None => (Vec::new(), Err(ApiError::not_found(format!("no friendship with `{target}`")))),
                    }
                }
            }
        })??;
        Ok(FriendResult { action, friendship })
    }

    // ---- training ----

    /// Joins every stored mood input against the sensor log and weather.
    pub fn joined_examples(&self, vmc_window_hours: Option<i64>) -> Result<(Vec<MoodInput>, happimeter_core::pipeline::JoinOutput), ApiError> {
        let (moods, sensors, profiles) = {
            let snap = self.store.read();
            (snap.all_moods(), snap.all_sensors(), snap.profiles.values().cloned().collect::<Vec<_>>())
        };
        let zones = zones_from_profiles(&profiles).map_err(|e| ApiError::internal(e.to_string()))?;
        let mut cfg = self.config.featurize.clone();
        if let Some(h) = vmc_window_hours {
            cfg.vmc_window_hours = h;
        }
        let out = join_examples(&moods, &sensors, &self.weather, &zones, &cfg)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok((moods, out))
    }

    fn train_scope(&self, scope: Scope, examples: &[LabeledExample], at: DateTime<Utc>) -> Result<ScopeResult, ApiError> {
        let hp = self.config.forest;
        let mut models = BTreeMap::new();
        let mut targets = Vec::new();
        for target in Target::ALL {
            let data = Dataset::from_examples(examples, target);
            let model =
                train_forest(&data, target, scope.clone(), &hp).map_err(|e| ApiError::internal(e.to_string()))?;
            let (report, cv_error) = match cross_validate(&data, target, scope.clone(), &hp, self.config.folds) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            targets.push(TargetSummary {
                target,
                accuracy: report.as_ref().map(|r| r.accuracy),
                kappa: report.as_ref().map(|r| r.kappa),
                stratified: report.as_ref().map(|r| r.stratified),
                cv_error,
            });
            models.insert(target, TrainedModel { model, report });
        }
        self.registry.install(ScopeEntry { scope: scope.clone(), trained_at: at, n_examples: examples.len(), models });
        Ok(ScopeResult { scope: scope.to_string(), trained: true, reason: None, n_examples: examples.len(), targets })
    }

    fn skipped(scope: &Scope, n: usize, reason: String) -> ScopeResult {
        ScopeResult { scope: scope.to_string(), trained: false, reason: Some(reason), n_examples: n, targets: Vec::new() }
    }

    /// `general`, `individual:<user>` or `all`.
    pub fn retrain(&self, token: Option<&str>, scope: &str) -> Result<RetrainReport, ApiError> {
        self.admin(token)?;
        let (general, users): (bool, Option<Vec<UserId>>) = match scope {
            "general" => (true, Some(Vec::new())),
            "all" => (true, None),
            s => match s.strip_prefix("individual:") {
                Some(u) => (false, Some(vec![UserId::new(u).map_err(|e| ApiError::field("scope", e.to_string()))?])),
                None => return Err(ApiError::field("scope", format!("expected general, individual:<user> or all, got `{s}`"))),
            },
        };
        let _training = self.registry.training_lock();
        let at = self.now();
        let (moods, joined) = self.joined_examples(None)?;
        let mut scopes = Vec::new();
        if general {
            if joined.examples.is_empty() {
                scopes.push(App::skipped(&Scope::General, 0, "no mood input joins to a feature vector".into()));
            } else {
                scopes.push(self.train_scope(Scope::General, &joined.examples, at)?);
            }
        }
        let mut by_user: BTreeMap<UserId, Vec<LabeledExample>> = BTreeMap::new();
        for ex in &joined.examples {
            by_user.entry(ex.user.clone()).or_default().push(ex.clone());
        }
        let users = users.unwrap_or_else(|| {
            let mut u: Vec<UserId> = moods.iter().map(|m| m.user.clone()).collect();
            u.sort();
            u.dedup();
            u
        });
        for user in users {
            let scope = Scope::Individual(user.clone());
            let examples = by_user.remove(&user).unwrap_or_default();
            let min = self.config.min_train_examples;
            if examples.len() < min {
                scopes.push(App::skipped(
                    &scope,
                    examples.len(),
                    format!("insufficient data: {} joined mood inputs, need {min}", examples.len()),
                ));
            } else {
                scopes.push(self.train_scope(scope, &examples, at)?);
            }
        }
        Ok(RetrainReport {
            trained_at: at,
            n_moods: moods.len(),
            n_joined: joined.examples.len(),
            dropped: joined.drop_counts().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            scopes,
        })
    }

    // ---- insights and stats ----

    pub fn insights(&self, token: Option<&str>, target: Option<&str>, top: usize) -> Result<Insights, ApiError> {
        let user = self.user(token)?;
        let target = match target {
            None => Target::MoodState,
            Some(s) => Target::parse(s).ok_or_else(|| ApiError::field("target", format!("unknown target `{s}`")))?,
        };
        let importance = match self.registry.resolve(&user) {
            Some((entry, fallback)) => match entry.model(target) {
                Some(model) => {
                    let rep = feature_importance(model);
                    let take = |v: Vec<&FeatureImportance>| v.into_iter().take(top).cloned().collect();
                    ImportanceSection {
                        target,
                        model_scope: Some(entry.scope.to_string()),
                        fallback_to_general: fallback,
                        by_impurity_decrease: take(rep.ranked_by_decrease()),
                        by_node_count: take(rep.ranked_by_node_count()),
                        reason: fallback.then(|| "no individual model yet; showing the general model".to_string()),
                    }
                }
                None => ImportanceSection {
                    target,
                    model_scope: Some(entry.scope.to_string()),
                    fallback_to_general: fallback,
                    by_impurity_decrease: Vec::new(),
                    by_node_count: Vec::new(),
                    reason: Some(format!("no {} model", target.as_str())),
                },
            },
            None => ImportanceSection {
                target,
                model_scope: None,
                fallback_to_general: true,
                by_impurity_decrease: Vec::new(),
                by_node_count: Vec::new(),
                reason: Some("no model has been trained yet".into()),
            },
        };

        let (moods, sensors, friendships) = {
            let snap = self.store.read();
            let friendships: Vec<Friendship> = snap
                .friendships_of(&user)
                .filter(|f| f.status == FriendshipStatus::Accepted)
                .cloned()
                .collect();
            let mut sensors = BTreeMap::new();
            sensors.insert(user.clone(), snap.sensor_history(&user));
            for f in &friendships {
                if let Some(o) = f.other(&user) {
                    sensors.insert(o.clone(), snap.sensor_history(o));
                }
            }
            let moods: Vec<MoodInput> = snap.moods.get(&user).map(|v| v.iter().map(|m| m.input.clone()).collect()).unwrap_or_default();
            (moods, sensors, friendships)
        };
        let influence = if friendships.is_empty() {
            InfluenceSection { influencers: Vec::new(), reason: Some("no accepted friends".into()) }
        } else {
            let mut scores = influence_scores(&moods, &sensors, &friendships, &self.config.influence);
            let mine = scores.remove(&user).unwrap_or_default();
            let reason = mine.is_empty().then(|| {
                format!(
                    "no friend has {} mood inputs both with and without co-presence",
                    self.config.influence.min_events
                )
            });
            InfluenceSection { influencers: mine, reason }
        };
        Ok(Insights { importance, influence })
    }

    fn stats_scope(&self, token: Option<&str>, scope: Option<StatsScope>) -> Result<(StatsScope, Option<UserId>), ApiError> {
        match (self.authenticate(token)?, scope.unwrap_or(StatsScope::Me)) {
            (Principal::User(u), StatsScope::Me) => Ok((StatsScope::Me, Some(u))),
            (Principal::User(_), StatsScope::Cohort) => Err(ApiError::forbidden("cohort statistics need an admin credential")),
            (Principal::Admin, _) => Ok((StatsScope::Cohort, None)),
        }
    }

    pub fn stats_descriptive(&self, token: Option<&str>, scope: Option<StatsScope>) -> Result<Section<DescriptiveReport>, ApiError> {
        let (scope, user) = self.stats_scope(token, scope)?;
        let labels: Vec<(Level, Level)> = {
            let snap = self.store.read();
            snap.moods
                .iter()
                .filter(|(u, _)| user.as_ref().map_or(true, |me| me == *u))
                .flat_map(|(_, v)| v.iter().map(|m| (m.input.pleasance, m.input.activation)))
                .collect()
        };
        Ok(match descriptive_stats(&labels) {
            Ok(r) => Section { scope, data: Some(r), reason: None },
            Err(e) => Section { scope, data: None, reason: Some(e.to_string()) },
        })
    }

    fn scoped_examples(&self, user: &Option<UserId>, vmc_window_hours: Option<i64>) -> Result<Vec<LabeledExample>, ApiError> {
        let (_, joined) = self.joined_examples(vmc_window_hours)?;
        Ok(joined
            .examples
            .into_iter()
            .filter(|e| user.as_ref().map_or(true, |u| &e.user == u))
            .collect())
    }

    pub fn stats_hourly(&self, token: Option<&str>, scope: Option<StatsScope>) -> Result<Section<HourlyProfile>, ApiError> {
        let (scope, user) = self.stats_scope(token, scope)?;
        let examples = self.scoped_examples(&user, None)?;
        if examples.is_empty() {
            return Ok(Section { scope, data: None, reason: Some("no joined mood inputs".into()) });
        }
        Ok(Section { scope, data: Some(hourly_profile(&examples)), reason: None })
    }

    pub fn stats_correlations(&self, token: Option<&str>, scope: Option<StatsScope>) -> Result<Section<CorrelationMatrix>, ApiError> {
        let (scope, user) = self.stats_scope(token, scope)?;
        let examples = self.scoped_examples(&user, Some(self.config.correlation.vmc_window_hours))?;
        if examples.len() < 3 {
            return Ok(Section { scope, data: None, reason: Some(format!("{} joined mood inputs, need at least 3", examples.len())) });
        }
        let profiles: HashMap<UserId, ParticipantProfile> = self.store.read().profiles.clone().into_iter().collect();
        let (vars, cols) = table3_columns(&examples, &profiles);
        Ok(Section { scope, data: Some(correlation_matrix(vars, &cols)), reason: None })
    }

    pub fn schedule_today(&self, token: Option<&str>) -> Result<TodaySchedule, ApiError> {
        let user = self.user(token)?;
        let now = self.now();
        let (zone, tz, answered) = {
            let snap = self.store.read();
            let (z, tz) = zone_of(&snap, &user);
            (z, tz, snap.answered.get(&user).cloned().unwrap_or_default())
        };
        let date = zone.local(now).date();
        let s = generate_schedule(&user, date, &zone, &self.config.sampling, self.config.seed)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let expiry = Duration::minutes(self.config.sampling.expiry_minutes);
        let due = due_prompt(now, &s, &answered, expiry);
        let prompts = s
            .prompts
            .iter()
            .map(|p| {
                let status = if answered.contains(&p.id) {
                    "answered"
                } else if p.at > now {
                    "upcoming"
                } else if now - p.at <= expiry {
                    "due"
                } else {
                    "expired"
                };
                PromptView { id: p.id, local: p.local, at: p.at, status: status.into() }
            })
            .collect();
        Ok(TodaySchedule { date, timezone: tz, prompts, due })
    }

    /// Loads a CSV bundle into the store and seeds the weather cache with its rows.
    pub fn import_bundle(&self, bundle: &Bundle) -> Result<ImportSummary, ApiError> {
        self.weather.preload(bundle.weather.iter().cloned());
        self.store.transact(|snap| {
            let mut events: Vec<Event> = bundle.profiles.iter().cloned().map(Event::Profile).collect();
            events.extend(bundle.sensors.iter().cloned().map(Event::Sensor));
            let mut id = snap.next_mood_id;
            for m in &bundle.moods {
                events.push(Event::Mood { id, input: m.clone() });
                id += 1;
            }
            events.extend(bundle.friendships.iter().cloned().map(Event::Friendship));
            (events, ())
        })?;
        Ok(ImportSummary {
            sensors: bundle.sensors.len(),
            moods: bundle.moods.len(),
            profiles: bundle.profiles.len(),
            friendships: bundle.friendships.len(),
            weather: bundle.weather.len(),
        })
    }
}
