//! The CSV bundle: sensors, moods, weather, profiles and friendships.

use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use happimeter_core::domain::{
    BigFive, Friendship, FriendshipStatus, Gender, Level, LocationBucket, MoodInput, MoodSource, ParticipantProfile,
    SensorSample, UserId, ValidationError, WeatherObservation,
};

pub const SENSORS_CSV: &str = "sensors.csv";
pub const MOODS_CSV: &str = "moods.csv";
pub const WEATHER_CSV: &str = "weather.csv";
pub const PROFILES_CSV: &str = "profiles.csv";
pub const FRIENDS_CSV: &str = "friends.csv";

pub const SENSORS_HEADER: [&str; 8] =
    ["user_id", "timestamp_utc", "heart_rate_bpm", "activity_level", "vmc", "light_level", "lat", "lon"];
pub const MOODS_HEADER: [&str; 5] = ["user_id", "timestamp_utc", "pleasance", "activation", "source"];
pub const WEATHER_HEADER: [&str; 8] =
    ["lat_bucket", "lon_bucket", "hour_utc", "temp_c", "humidity_pct", "pressure_hpa", "wind_mps", "clouds_pct"];
pub const PROFILES_HEADER: [&str; 9] = [
    "user_id",
    "age",
    "gender",
    "neuroticism",
    "extraversion",
    "openness",
    "agreeableness",
    "conscientiousness",
    "timezone",
];
pub const FRIENDS_HEADER: [&str; 5] = ["user_a", "user_b", "status", "share_a_to_b", "share_b_to_a"];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing input files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Missing(Vec<PathBuf>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: header must be `{expected}`, found `{found}`")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("{path} line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
}

impl BundleError {
    pub fn is_io(&self) -> bool {
        matches!(self, BundleError::Missing(_) | BundleError::Io { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    pub sensors: Vec<SensorSample>,
    pub moods: Vec<MoodInput>,
    pub weather: Vec<WeatherObservation>,
    pub profiles: Vec<ParticipantProfile>,
    pub friendships: Vec<Friendship>,
}

pub fn format_ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

#[derive(Serialize, Deserialize)]
struct SensorRow {
    user_id: String,
    timestamp_utc: DateTime<Utc>,
    heart_rate_bpm: f64,
    activity_level: i64,
    vmc: f64,
    light_level: i64,
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct MoodRow {
    user_id: String,
    timestamp_utc: DateTime<Utc>,
    pleasance: i64,
    activation: i64,
    source: MoodSource,
}

#[derive(Serialize, Deserialize)]
struct WeatherRow {
    lat_bucket: f64,
    lon_bucket: f64,
    hour_utc: DateTime<Utc>,
    temp_c: f64,
    humidity_pct: f64,
    pressure_hpa: f64,
    wind_mps: f64,
    clouds_pct: f64,
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    user_id: String,
    age: Option<f64>,
    gender: Option<String>,
    neuroticism: Option<f64>,
    extraversion: Option<f64>,
    openness: Option<f64>,
    agreeableness: Option<f64>,
    conscientiousness: Option<f64>,
    timezone: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FriendRow {
    user_a: String,
    user_b: String,
    status: FriendshipStatus,
    share_a_to_b: bool,
    share_b_to_a: bool,
}

fn activity_u8(field: &'static str, v: i64) -> Result<u8, ValidationError> {
    u8::try_from(v)
        .ok()
        .filter(|v| *v <= 5)
        .ok_or(ValidationError::OutOfRange { field, value: v.to_string(), expected: "0..=5" })
}

fn sensor_from_row(r: SensorRow) -> Result<SensorSample, ValidationError> {
    let s = SensorSample {
        user: UserId::new(r.user_id)?,
        timestamp: r.timestamp_utc,
        heart_rate: r.heart_rate_bpm,
        activity: activity_u8("activity_level", r.activity_level)?,
        vmc: r.vmc,
        light_level: activity_u8("light_level", r.light_level)?,
        latitude: r.lat,
        longitude: r.lon,
    };
    s.validate()?;
    Ok(s)
}

fn mood_from_row(r: MoodRow) -> Result<MoodInput, ValidationError> {
    Ok(MoodInput {
        user: UserId::new(r.user_id)?,
        timestamp: r.timestamp_utc,
        pleasance: Level::new("pleasance", r.pleasance)?,
        activation: Level::new("activation", r.activation)?,
        source: r.source,
    })
}

fn weather_from_row(r: WeatherRow) -> Result<WeatherObservation, ValidationError> {
    let w = WeatherObservation {
        temperature: r.temp_c,
        humidity: r.humidity_pct,
        pressure: r.pressure_hpa,
        wind: r.wind_mps,
        clouds: r.clouds_pct,
        valid_at: r.hour_utc,
        location_bucket: LocationBucket::from_coords(r.lat_bucket, r.lon_bucket),
    };
    w.validate()?;
    Ok(w)
}

pub fn parse_gender(s: &str) -> Result<Gender, ValidationError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "unknown" | "other" => Ok(Gender::Unknown),
        "f" | "female" => Ok(Gender::Female),
        "m" | "male" => Ok(Gender::Male),
        _ => Err(ValidationError::Invalid { field: "gender", reason: format!("unknown gender `{s}`") }),
    }
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::Female => "female",
        Gender::Male => "male",
        Gender::Unknown => "",
    }
}

fn profile_from_row(r: ProfileRow) -> Result<ParticipantProfile, ValidationError> {
    let traits = [r.neuroticism, r.extraversion, r.openness, r.agreeableness, r.conscientiousness];
    let big_five = match traits {
        [Some(neuroticism), Some(extraversion), Some(openness), Some(agreeableness), Some(conscientiousness)] => {
            Some(BigFive { neuroticism, extraversion, openness, agreeableness, conscientiousness })
        }
        [None, None, None, None, None] => None,
        _ => {
            return Err(ValidationError::Invalid {
                field: "big_five",
                reason: "personality scores must be all present or all empty".into(),
            })
        }
    };
    let p = ParticipantProfile {
        user: UserId::new(r.user_id)?,
        age: r.age,
        gender: parse_gender(r.gender.as_deref().unwrap_or(""))?,
        big_five,
        timezone: r.timezone.filter(|t| !t.is_empty()).unwrap_or_else(|| "UTC".into()),
    };
    p.validate()?;
    Ok(p)
}

fn friend_from_row(r: FriendRow) -> Result<Friendship, ValidationError> {
    let mut f = Friendship::request(UserId::new(r.user_a)?, UserId::new(r.user_b)?)?;
    f.status = r.status;
    f.share_mood_a_to_b = r.share_a_to_b;
    f.share_mood_b_to_a = r.share_b_to_a;
    Ok(f)
}

fn read_table<R, T>(path: &Path, header: &[&str], convert: impl Fn(R) -> Result<T, ValidationError>) -> Result<Vec<T>, BundleError>
where
    R: for<'de> Deserialize<'de>,
{
    let csv_err = |source| BundleError::Csv { path: path.into(), source };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(source) => BundleError::Io { path: path.into(), source },
            _ => unreachable!(),
        },
        _ => csv_err(e),
    })?;
    let found: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != header {
        return Err(BundleError::Header { path: path.into(), expected: header.join(","), found: found.join(",") });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<R>().enumerate() {
        let line = i as u64 + 2;
        let row = rec.map_err(|e| BundleError::Row { path: path.into(), line, message: e.to_string() })?;
        out.push(convert(row).map_err(|e| BundleError::Row { path: path.into(), line, message: e.to_string() })?);
    }
    Ok(out)
}

fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), BundleError> {
    let io = |source| BundleError::Io { path: path.into(), source };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| BundleError::Csv { path: path.into(), source: e })?;
    w.write_record(header).map_err(|e| BundleError::Csv { path: path.into(), source: e })?;
    for r in rows {
        w.serialize(r).map_err(|e| BundleError::Csv { path: path.into(), source: e })?;
    }
    w.flush().map_err(io)
}

/// Reads a bundle directory. The four core files are required;
/// friends.csv is optional.
pub fn read_bundle(dir: &Path) -> Result<Bundle, BundleError> {
    let required = [SENSORS_CSV, MOODS_CSV, WEATHER_CSV, PROFILES_CSV];
    let missing: Vec<PathBuf> = required.iter().map(|f| dir.join(f)).filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(BundleError::Missing(missing));
    }
    let friends = dir.join(FRIENDS_CSV);
    Ok(Bundle {
        sensors: read_table(&dir.join(SENSORS_CSV), &SENSORS_HEADER, sensor_from_row)?,
        moods: read_table(&dir.join(MOODS_CSV), &MOODS_HEADER, mood_from_row)?,
        weather: read_table(&dir.join(WEATHER_CSV), &WEATHER_HEADER, weather_from_row)?,
        profiles: read_table(&dir.join(PROFILES_CSV), &PROFILES_HEADER, profile_from_row)?,
        friendships: if friends.is_file() { read_table(&friends, &FRIENDS_HEADER, friend_from_row)? } else { Vec::new() },
    })
}

pub fn read_weather_csv(path: &Path) -> Result<Vec<WeatherObservation>, BundleError> {
    if !path.is_file() {
        return Err(BundleError::Missing(vec![path.into()]));
    }
    read_table(path, &WEATHER_HEADER, weather_from_row)
}

pub fn write_bundle(dir: &Path, b: &Bundle) -> Result<(), BundleError> {
    std::fs::create_dir_all(dir).map_err(|source| BundleError::Io { path: dir.into(), source })?;
    write_table(
        &dir.join(SENSORS_CSV),
        &SENSORS_HEADER,
        b.sensors.iter().map(|s| SensorRow {
            user_id: s.user.to_string(),
            timestamp_utc: s.timestamp,
            heart_rate_bpm: s.heart_rate,
            activity_level: s.activity as i64,
            vmc: s.vmc,
            light_level: s.light_level as i64,
            lat: s.latitude,
            lon: s.longitude,
        }),
    )?;
    write_table(
        &dir.join(MOODS_CSV),
        &MOODS_HEADER,
        b.moods.iter().map(|m| MoodRow {
            user_id: m.user.to_string(),
            timestamp_utc: m.timestamp,
            pleasance: m.pleasance.value() as i64,
            activation: m.activation.value() as i64,
            source: m.source,
        }),
    )?;
    write_table(
        &dir.join(WEATHER_CSV),
        &WEATHER_HEADER,
        b.weather.iter().map(|w| WeatherRow {
            lat_bucket: w.location_bucket.lat(),
            lon_bucket: w.location_bucket.lon(),
            hour_utc: w.valid_at,
            temp_c: w.temperature,
            humidity_pct: w.humidity,
            pressure_hpa: w.pressure,
            wind_mps: w.wind,
            clouds_pct: w.clouds,
        }),
    )?;
    write_table(
        &dir.join(PROFILES_CSV),
        &PROFILES_HEADER,
        b.profiles.iter().map(|p| ProfileRow {
            user_id: p.user.to_string(),
            age: p.age,
            gender: Some(gender_str(p.gender).to_string()),
            neuroticism: p.big_five.map(|b| b.neuroticism),
            extraversion: p.big_five.map(|b| b.extraversion),
            openness: p.big_five.map(|b| b.openness),
            agreeableness: p.big_five.map(|b| b.agreeableness),
            conscientiousness: p.big_five.map(|b| b.conscientiousness),
            timezone: Some(p.timezone.clone()),
        }),
    )?;
    write_table(
        &dir.join(FRIENDS_CSV),
        &FRIENDS_HEADER,
        b.friendships.iter().map(|f| FriendRow {
            user_a: f.a.to_string(),
            user_b: f.b.to_string(),
            status: f.status,
            share_a_to_b: f.share_mood_a_to_b,
            share_b_to_a: f.share_mood_b_to_a,
        }),
    )
}
