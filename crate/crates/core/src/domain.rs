//! Value types shared across the pipeline: participants, sensor readings,
//! mood self-reports and the 3×3 pleasance/activation grid.

use std::fmt;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed clock skew between a client timestamp and server receipt.
pub const FUTURE_SKEW: Duration = Duration::minutes(5);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{field}: value {value} outside {expected}")]
    OutOfRange {
        field: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ValidationError {
    pub fn field(&self) -> &'static str {
        match self {
            ValidationError::OutOfRange { field, .. } | ValidationError::Invalid { field, .. } => {
                field
            }
        }
    }

    fn range(field: &'static str, value: impl fmt::Display, expected: &'static str) -> Self {
        ValidationError::OutOfRange {
            field,
            value: value.to_string(),
            expected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub const MAX_LEN: usize = 64;

    pub fn new(id: impl Into<String>) -> Result<Self, ValidationError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ValidationError::Invalid {
                field: "user",
                reason: "must not be empty".into(),
            });
        }
        if id.chars().count() > Self::MAX_LEN {
            return Err(ValidationError::Invalid {
                field: "user",
                reason: format!("longer than {} characters", Self::MAX_LEN),
            });
        }
        Ok(UserId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for UserId {
    type Error = ValidationError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        UserId::new(value)
    }
}

impl From<UserId> for String {
    fn from(value: UserId) -> Self {
        value.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A three-level rating on one circumplex axis: 0 low, 1 medium, 2 high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Level(u8);

impl Level {
    pub const LOW: Level = Level(0);
    pub const MEDIUM: Level = Level(1);
    pub const HIGH: Level = Level(2);
    pub const ALL: [Level; 3] = [Level::LOW, Level::MEDIUM, Level::HIGH];

    pub fn new(field: &'static str, value: i64) -> Result<Self, ValidationError> {
        if (0..=2).contains(&value) {
            Ok(Level(value as u8))
        } else {
            Err(ValidationError::range(field, value, "{0,1,2}"))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Level {
    type Error = ValidationError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Level::new("level", value as i64)
    }
}

impl From<Level> for u8 {
    fn from(value: Level) -> Self {
        value.0
    }
}

/// Cell of the nine-outcome grid, coded 1..=9.
///
/// Code 1 is high pleasance with high activation, code 9 is low/low, and the
/// codes run row-major over activation rows: `1 + (2 - p) + 3 * (2 - a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MoodState(u8);

impl MoodState {
    pub fn code(self) -> u8 {
        self.0
    }

    pub fn from_code(code: i64) -> Result<Self, ValidationError> {
        if (1..=9).contains(&code) {
            Ok(MoodState(code as u8))
        } else {
            Err(ValidationError::range("mood_state", code, "{1..9}"))
        }
    }

    pub fn all() -> impl Iterator<Item = MoodState> {
        (1..=9).map(MoodState)
    }

    /// Default display word for the cell; never used in computation.
    pub fn label(self) -> &'static str {
        DEFAULT_LABELS[(self.0 - 1) as usize]
    }
}

impl TryFrom<u8> for MoodState {
    type Error = ValidationError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        MoodState::from_code(value as i64)
    }
}

impl From<MoodState> for u8 {
    fn from(value: MoodState) -> Self {
        value.0
    }
}

// Non-normative cell words, indexed by code - 1.
const DEFAULT_LABELS: [&str; 9] = [
    "excited", "alert", "angry", "happy", "neutral", "sad", "relaxed", "sleepy", "tired",
];

pub fn encode_mood_state(pleasance: Level, activation: Level) -> MoodState {
    MoodState(1 + (2 - pleasance.0) + 3 * (2 - activation.0))
}

/// Checked variant for raw integers arriving from the wire.
pub fn encode_mood_state_raw(pleasance: i64, activation: i64) -> Result<MoodState, ValidationError> {
    Ok(encode_mood_state(
        Level::new("pleasance", pleasance)?,
        Level::new("activation", activation)?,
    ))
}

pub fn decode_mood_state(state: MoodState) -> (Level, Level) {
    let offset = state.0 - 1;
    (Level(2 - offset % 3), Level(2 - offset / 3))
}

pub fn decode_mood_state_raw(code: i64) -> Result<(Level, Level), ValidationError> {
    MoodState::from_code(code).map(decode_mood_state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoodSource {
    Prompted,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodInput {
    pub user: UserId,
    pub timestamp: DateTime<Utc>,
    pub pleasance: Level,
    pub activation: Level,
    pub source: MoodSource,
}

impl MoodInput {
    pub fn mood_state(&self) -> MoodState {
        encode_mood_state(self.pleasance, self.activation)
    }

    /// Rejects timestamps further than [`FUTURE_SKEW`] past `received_at`.
    pub fn validate(&self, received_at: DateTime<Utc>) -> Result<(), ValidationError> {
        if self.timestamp > received_at + FUTURE_SKEW {
            return Err(ValidationError::Invalid {
                field: "timestamp",
                reason: format!("{} is in the future", self.timestamp.to_rfc3339()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub user: UserId,
    pub timestamp: DateTime<Utc>,
    pub heart_rate: f64,
    pub activity: u8,
    pub vmc: f64,
    pub light_level: u8,
    pub latitude: f64,
    pub longitude: f64,
}

impl SensorSample {
    pub fn validate(&self) -> Result<(), ValidationError> {
        check_finite("heart_rate", self.heart_rate)?;
        if !(0.0..=300.0).contains(&self.heart_rate) {
            return Err(ValidationError::range("heart_rate", self.heart_rate, "[0, 300]"));
        }
        if self.activity > 5 {
            return Err(ValidationError::range("activity", self.activity, "{0..5}"));
        }
        check_finite("vmc", self.vmc)?;
        if self.vmc < 0.0 {
            return Err(ValidationError::range("vmc", self.vmc, ">= 0"));
        }
        if self.light_level > 5 {
            return Err(ValidationError::range("light_level", self.light_level, "{0..5}"));
        }
        check_finite("latitude", self.latitude)?;
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(ValidationError::range("latitude", self.latitude, "[-90, 90]"));
        }
        check_finite("longitude", self.longitude)?;
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(ValidationError::range("longitude", self.longitude, "[-180, 180]"));
        }
        Ok(())
    }
}

fn check_finite(field: &'static str, value: f64) -> Result<(), ValidationError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::Invalid {
            field,
            reason: "must be finite".into(),
        })
    }
}

/// Spatial key for weather lookups: coordinates rounded to 0.1°, stored as
/// integer tenths so it can be hashed and compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocationBucket {
    pub lat_tenths: i32,
    pub lon_tenths: i32,
}

impl LocationBucket {
    pub fn from_coords(lat: f64, lon: f64) -> Self {
        LocationBucket {
            lat_tenths: (lat * 10.0).round() as i32,
            lon_tenths: (lon * 10.0).round() as i32,
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat_tenths as f64 / 10.0
    }

    pub fn lon(&self) -> f64 {
        self.lon_tenths as f64 / 10.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherObservation {
    pub temperature: f64,
    pub humidity: f64,
    pub pressure: f64,
    pub wind: f64,
    pub clouds: f64,
    /// Start of the UTC hour the observation covers.
    pub valid_at: DateTime<Utc>,
    pub location_bucket: LocationBucket,
}

impl WeatherObservation {
    pub fn validate(&self) -> Result<(), ValidationError> {
        for (field, v) in [
            ("temperature", self.temperature),
            ("humidity", self.humidity),
            ("pressure", self.pressure),
            ("wind", self.wind),
            ("clouds", self.clouds),
        ] {
            check_finite(field, v)?;
        }
        if !(0.0..=100.0).contains(&self.humidity) {
            return Err(ValidationError::range("humidity", self.humidity, "[0, 100]"));
        }
        if !(0.0..=100.0).contains(&self.clouds) {
            return Err(ValidationError::range("clouds", self.clouds, "[0, 100]"));
        }
        if self.pressure <= 0.0 {
            return Err(ValidationError::range("pressure", self.pressure, "> 0"));
        }
        if self.wind < 0.0 {
            return Err(ValidationError::range("wind", self.wind, ">= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigFive {
    pub neuroticism: f64,
    pub extraversion: f64,
    pub openness: f64,
    pub agreeableness: f64,
    pub conscientiousness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub user: UserId,
    pub age: Option<f64>,
    pub gender: Gender,
    pub big_five: Option<BigFive>,
    /// Zone id understood by [`crate::featurize::parse_zone`]; defaults to UTC.
    #[serde(default = "default_timezone")]
    pub timezone: String,
}

pub fn default_timezone() -> String {
    "UTC".to_string()
}

impl ParticipantProfile {
    pub fn new(user: UserId) -> Self {
        ParticipantProfile {
            user,
            age: None,
            gender: Gender::Unknown,
            big_five: None,
            timezone: default_timezone(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if let Some(age) = self.age {
            check_finite("age", age)?;
            if !(10.0..=120.0).contains(&age) {
                return Err(ValidationError::range("age", age, "[10, 120]"));
            }
        }
        if let Some(b) = &self.big_five {
            for (field, v) in [
                ("neuroticism", b.neuroticism),
                ("extraversion", b.extraversion),
                ("openness", b.openness),
                ("agreeableness", b.agreeableness),
                ("conscientiousness", b.conscientiousness),
            ] {
                check_finite(field, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FriendshipStatus {
    Pending,
    Accepted,
}

/// Friendship between two users. `a` is the requester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Friendship {
    pub a: UserId,
    pub b: UserId,
    pub status: FriendshipStatus,
    pub share_mood_a_to_b: bool,
    pub share_mood_b_to_a: bool,
}

impl Friendship {
    pub fn request(a: UserId, b: UserId) -> Result<Self, ValidationError> {
        if a == b {
            return Err(ValidationError::Invalid {
                field: "target",
                reason: "cannot befriend yourself".into(),
            });
        }
        Ok(Friendship {
            a,
            b,
            status: FriendshipStatus::Pending,
            share_mood_a_to_b: true,
            share_mood_b_to_a: true,
        })
    }

    /// Order-independent key for the pair.
    pub fn key(&self) -> (UserId, UserId) {
        pair_key(&self.a, &self.b)
    }

    pub fn involves(&self, user: &UserId) -> bool {
        &self.a == user || &self.b == user
    }

    pub fn other(&self, user: &UserId) -> Option<&UserId> {
        if &self.a == user {
            Some(&self.b)
        } else if &self.b == user {
            Some(&self.a)
        } else {
            None
        }
    }

    /// Whether `from` shares their mood with `to` under this friendship.
    pub fn shares(&self, from: &UserId, to: &UserId) -> bool {
        if self.status != FriendshipStatus::Accepted {
            return false;
        }
        if &self.a == from && &self.b == to {
            self.share_mood_a_to_b
        } else if &self.b == from && &self.a == to {
            self.share_mood_b_to_a
        } else {
            false
        }
    }

    pub fn set_sharing(&mut self, from: &UserId, enabled: bool) {
        if &self.a == from {
            self.share_mood_a_to_b = enabled;
        } else if &self.b == from {
            self.share_mood_b_to_a = enabled;
        }
    }
}

pub fn pair_key(x: &UserId, y: &UserId) -> (UserId, UserId) {
    if x <= y {
        (x.clone(), y.clone())
    } else {
        (y.clone(), x.clone())
    }
}
