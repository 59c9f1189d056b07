//! Joins mood self-reports with the wearer's sensor stream and the weather to
//! produce labeled 13-feature examples.

use std::collections::BTreeSet;
use std::str::FromStr;

use chrono::{
    DateTime, Datelike, Duration, FixedOffset, LocalResult, NaiveDate, NaiveDateTime, TimeZone,
    Timelike, Utc, Weekday,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    encode_mood_state, Level, LocationBucket, MoodInput, MoodState, SensorSample, UserId,
    WeatherObservation,
};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const N_FEATURES: usize = 13;

/// Predictor names, in the column order used by every model.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "heart_rate",
    "activity",
    "vmc",
    "vmc_last_4h",
    "is_weekend_or_holiday",
    "hour_of_day",
    "light_level",
    "gps_variance",
    "temperature",
    "humidity",
    "clouds",
    "wind",
    "pressure",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeaturizeError {
    #[error("sensor samples are not sorted by timestamp (index {0})")]
    Unsorted(usize),
    #[error("unknown time zone `{0}`")]
    UnknownZone(String),
}

/// A time zone: either an IANA zone or a fixed UTC offset such as `UTC+2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Zone {
    Named(chrono_tz::Tz),
    Fixed(FixedOffset),
}

pub fn parse_zone(id: &str) -> Result<Zone, FeaturizeError> {
    let trimmed = id.trim();
    let unknown = || FeaturizeError::UnknownZone(id.to_string());
    if trimmed.eq_ignore_ascii_case("utc") || trimmed.eq_ignore_ascii_case("z") {
        return Ok(Zone::Fixed(FixedOffset::east_opt(0).unwrap()));
    }
    let offset = trimmed
        .strip_prefix("UTC")
        .or_else(|| trimmed.strip_prefix("GMT"))
        .or_else(|| trimmed.strip_prefix("utc"))
        .unwrap_or(trimmed);
    if let Some(sign) = offset.chars().next().filter(|c| *c == '+' || *c == '-') {
        let body = &offset[1..];
        let (h, m) = match body.split_once(':') {
            Some((h, m)) => (h, m),
            None if body.len() == 4 => body.split_at(2),
            None => (body, "0"),
        };
        let h: i32 = h.parse().map_err(|_| unknown())?;
        let m: i32 = m.parse().map_err(|_| unknown())?;
        if h > 14 || m >= 60 {
            return Err(unknown());
        }
        let secs = (h * 3600 + m * 60) * if sign == '-' { -1 } else { 1 };
        return FixedOffset::east_opt(secs).map(Zone::Fixed).ok_or_else(unknown);
    }
    chrono_tz::Tz::from_str(trimmed).map(Zone::Named).map_err(|_| unknown())
}

impl Zone {
    pub fn utc() -> Zone {
        Zone::Fixed(FixedOffset::east_opt(0).unwrap())
    }

    pub fn local(&self, at: DateTime<Utc>) -> NaiveDateTime {
        match self {
            Zone::Named(tz) => at.with_timezone(tz).naive_local(),
            Zone::Fixed(off) => at.with_timezone(off).naive_local(),
        }
    }

    /// Maps a local wall-clock time to UTC. Ambiguous times take the earlier
    /// instant; times inside a DST gap are pushed forward by the gap.
    pub fn to_utc(&self, local: NaiveDateTime) -> DateTime<Utc> {
        fn resolve<T: TimeZone>(tz: &T, local: NaiveDateTime) -> DateTime<Utc> {
            let mut probe = local;
            for _ in 0..8 {
                match tz.from_local_datetime(&probe) {
                    LocalResult::Single(t) => return t.with_timezone(&Utc),
                    LocalResult::Ambiguous(a, b) => {
                        return a.min(b.clone()).with_timezone(&Utc);
                    }
                    LocalResult::None => probe += Duration::minutes(30),
                }
            }
            Utc.from_utc_datetime(&local)
        }
        match self {
            Zone::Named(tz) => resolve(tz, local),
            Zone::Fixed(off) => resolve(off, local),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizeConfig {
    /// Maximum distance between a mood input and its joined sensor sample.
    pub join_tolerance_minutes: i64,
    pub vmc_window_hours: i64,
    pub gps_window_hours: i64,
    #[serde(default)]
    pub holidays: BTreeSet<NaiveDate>,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            join_tolerance_minutes: 15,
            vmc_window_hours: 4,
            gps_window_hours: 4,
            holidays: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub heart_rate: f64,
    pub activity: f64,
    pub vmc: f64,
    pub vmc_last_4h: f64,
    pub is_weekend_or_holiday: f64,
    pub hour_of_day: f64,
    pub light_level: f64,
    pub gps_variance: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub clouds: f64,
    pub wind: f64,
    pub pressure: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.heart_rate,
            self.activity,
            self.vmc,
            self.vmc_last_4h,
            self.is_weekend_or_holiday,
            self.hour_of_day,
            self.light_level,
            self.gps_variance,
            self.temperature,
            self.humidity,
            self.clouds,
            self.wind,
            self.pressure,
        ]
    }

    pub fn from_array(v: [f64; N_FEATURES]) -> Self {
        FeatureVector {
            heart_rate: v[0],
            activity: v[1],
            vmc: v[2],
            vmc_last_4h: v[3],
            is_weekend_or_holiday: v[4],
            hour_of_day: v[5],
            light_level: v[6],
            gps_variance: v[7],
            temperature: v[8],
            humidity: v[9],
            clouds: v[10],
            wind: v[11],
            pressure: v[12],
        }
    }
}

/// Which windowed aggregates fell back to the imputed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImputationFlags {
    pub vmc_window: bool,
    pub gps_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub pleasance: Level,
    pub activation: Level,
    pub mood_state: MoodState,
    pub user: UserId,
    pub timestamp: DateTime<Utc>,
    pub imputed: ImputationFlags,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoSensorWindow,
    MissingWeather,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NoSensorWindow => "no_sensor_window",
            DropReason::MissingWeather => "missing_weather",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("weather unavailable: {0}")]
pub struct WeatherUnavailable(pub String);

/// Anything that can answer "what was the weather in this bucket at this hour".
pub trait WeatherSource {
    fn lookup(
        &self,
        bucket: LocationBucket,
        hour: DateTime<Utc>,
    ) -> Result<WeatherObservation, WeatherUnavailable>;
}

pub fn truncate_to_hour(at: DateTime<Utc>) -> DateTime<Utc> {
    let secs = at.timestamp().div_euclid(3600) * 3600;
    Utc.timestamp_opt(secs, 0).unwrap()
}

/// A windowed aggregate together with whether it was imputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Windowed {
    pub value: f64,
    pub imputed: bool,
}

pub fn ensure_sorted(samples: &[SensorSample]) -> Result<(), FeaturizeError> {
    match samples.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        Some(i) => Err(FeaturizeError::Unsorted(i + 1)),
        None => Ok(()),
    }
}

/// Samples with timestamp in `(at - window, at]`. Input must be sorted.
fn trailing_window(samples: &[SensorSample], at: DateTime<Utc>, window: Duration) -> &[SensorSample] {
    let start = at - window;
    let lo = samples.partition_point(|s| s.timestamp <= start);
    let hi = samples.partition_point(|s| s.timestamp <= at);
    &samples[lo..hi.max(lo)]
}

pub fn window_mean_vmc(
    samples: &[SensorSample],
    at: DateTime<Utc>,
    window: Duration,
) -> Result<Windowed, FeaturizeError> {
    ensure_sorted(samples)?;
    let in_window = trailing_window(samples, at, window);
    if in_window.is_empty() {
        return Ok(Windowed { value: 0.0, imputed: true });
    }
    let sum: f64 = in_window.iter().map(|s| s.vmc).sum();
    Ok(Windowed {
        value: sum / in_window.len() as f64,
        imputed: false,
    })
}

/// Great-circle distance in metres.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Mean squared haversine distance (m²) of the samples to their centroid.
pub fn gps_variance(samples: &[SensorSample]) -> Windowed {
    if samples.is_empty() {
        return Windowed { value: 0.0, imputed: true };
    }
    let n = samples.len() as f64;
    let lat_c = samples.iter().map(|s| s.latitude).sum::<f64>() / n;
    let lon_c = samples.iter().map(|s| s.longitude).sum::<f64>() / n;
    let total: f64 = samples
        .iter()
        .map(|s| haversine_m(s.latitude, s.longitude, lat_c, lon_c).powi(2))
        .sum();
    Windowed { value: total / n, imputed: false }
}

pub fn is_weekend_or_holiday(at: DateTime<Utc>, zone: &Zone, holidays: &BTreeSet<NaiveDate>) -> bool {
    let date = zone.local(at).date();
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun) || holidays.contains(&date)
}

pub fn hour_of_day(at: DateTime<Utc>, zone: &Zone) -> u32 {
    zone.local(at).hour()
}

/// Index of the sample nearest to `at` within `tolerance`; ties go to the earlier sample.
pub fn nearest_sample(samples: &[SensorSample], at: DateTime<Utc>, tolerance: Duration) -> Option<usize> {
    let idx = samples.partition_point(|s| s.timestamp < at);
    let mut best: Option<(usize, Duration)> = None;
    for i in [idx.checked_sub(1), Some(idx)].into_iter().flatten() {
        let Some(s) = samples.get(i) else { continue };
        let gap = (s.timestamp - at).abs();
        if gap > tolerance {
            continue;
        }
        if best.map_or(true, |(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i)
}

/// Builds the predictor vector for one user at `at`.
///
/// `samples` is that user's sorted sensor history. Returns the drop reason
/// when no sample lies within the join tolerance or no weather is available.
pub fn build_features(
    at: DateTime<Utc>,
    samples: &[SensorSample],
    weather: &dyn WeatherSource,
    zone: &Zone,
    cfg: &FeaturizeConfig,
) -> Result<Result<(FeatureVector, ImputationFlags), DropReason>, FeaturizeError> {
    ensure_sorted(samples)?;
    let tolerance = Duration::minutes(cfg.join_tolerance_minutes);
    let Some(i) = nearest_sample(samples, at, tolerance) else {
        return Ok(Err(DropReason::NoSensorWindow));
    };
    let joined = &samples[i];
    let bucket = LocationBucket::from_coords(joined.latitude, joined.longitude);
    let Ok(w) = weather.lookup(bucket, truncate_to_hour(at)) else {
        return Ok(Err(DropReason::MissingWeather));
    };
    let vmc = window_mean_vmc(samples, at, Duration::hours(cfg.vmc_window_hours))?;
    let gps = gps_variance(trailing_window(samples, at, Duration::hours(cfg.gps_window_hours)));
    let features = FeatureVector {
        heart_rate: joined.heart_rate,
        activity: joined.activity as f64,
        vmc: joined.vmc,
        vmc_last_4h: vmc.value,
        is_weekend_or_holiday: if is_weekend_or_holiday(at, zone, &cfg.holidays) { 1.0 } else { 0.0 },
        hour_of_day: hour_of_day(at, zone) as f64,
        light_level: joined.light_level as f64,
        gps_variance: gps.value,
        temperature: w.temperature,
        humidity: w.humidity,
        clouds: w.clouds,
        wind: w.wind,
        pressure: w.pressure,
    };
    let flags = ImputationFlags {
        vmc_window: vmc.imputed,
        gps_window: gps.imputed,
    };
    Ok(Ok((features, flags)))
}

pub fn build_labeled_example(
    mood: &MoodInput,
    samples: &[SensorSample],
    weather: &dyn WeatherSource,
    zone: &Zone,
    cfg: &FeaturizeConfig,
) -> Result<Result<LabeledExample, DropReason>, FeaturizeError> {
    Ok(build_features(mood.timestamp, samples, weather, zone, cfg)?.map(|(features, imputed)| {
        LabeledExample {
            features,
            pleasance: mood.pleasance,
            activation: mood.activation,
            mood_state: encode_mood_state(mood.pleasance, mood.activation),
            user: mood.user.clone(),
            timestamp: mood.timestamp,
            imputed,
        }
    }))
}
