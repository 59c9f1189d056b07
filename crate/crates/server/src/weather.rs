//! Weather providers (constant stub, CSV fixture, live HTTP archive) behind a
//! cache keyed by (0.1° bucket, UTC hour).

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use serde::Deserialize;

use happimeter_core::domain::{LocationBucket, WeatherObservation};
use happimeter_core::featurize::{truncate_to_hour, WeatherSource, WeatherUnavailable};
use happimeter_core::pipeline::WeatherTable;

use crate::config::{StubWeather, WeatherConfig, WeatherMode};
use crate::csvio::{read_weather_csv, BundleError};

pub trait WeatherProvider: Send + Sync {
    /// Observations covering at least the requested hour. May return more
    /// (a live fetch returns the whole day), all of which get cached.
    fn fetch(&self, bucket: LocationBucket, hour: DateTime<Utc>) -> Result<Vec<WeatherObservation>, WeatherUnavailable>;
}

pub struct StubProvider(pub StubWeather);

impl WeatherProvider for StubProvider {
    fn fetch(&self, bucket: LocationBucket, hour: DateTime<Utc>) -> Result<Vec<WeatherObservation>, WeatherUnavailable> {
        let s = &self.0;
        Ok(vec![WeatherObservation {
            temperature: s.temperature,
            humidity: s.humidity,
            pressure: s.pressure,
            wind: s.wind,
            clouds: s.clouds,
            valid_at: hour,
            location_bucket: bucket,
        }])
    }
}

pub struct FixtureProvider(pub WeatherTable);

impl FixtureProvider {
    pub fn from_csv(path: &std::path::Path) -> Result<Self, BundleError> {
        Ok(FixtureProvider(WeatherTable::new(read_weather_csv(path)?)))
    }
}

impl WeatherProvider for FixtureProvider {
    fn fetch(&self, bucket: LocationBucket, hour: DateTime<Utc>) -> Result<Vec<WeatherObservation>, WeatherUnavailable> {
        self.0.lookup(bucket, hour).map(|o| vec![o])
    }
}

/// Client for an hourly archive API with Open-Meteo's query and response
/// shape.
pub struct LiveProvider {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ArchiveResponse {
    hourly: ArchiveHourly,
}

#[derive(Deserialize)]
struct ArchiveHourly {
    time: Vec<String>,
    temperature_2m: Vec<Option<f64>>,
    relative_humidity_2m: Vec<Option<f64>>,
    pressure_msl: Vec<Option<f64>>,
    wind_speed_10m: Vec<Option<f64>>,
    cloud_cover: Vec<Option<f64>>,
}

impl LiveProvider {
    pub fn new(url: impl Into<String>, timeout: StdDuration) -> Result<Self, WeatherUnavailable> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| WeatherUnavailable(e.to_string()))?;
        Ok(LiveProvider { url: url.into(), client })
    }

    fn parse(body: ArchiveResponse, bucket: LocationBucket) -> Result<Vec<WeatherObservation>, WeatherUnavailable> {
        let h = body.hourly;
        let n = h.time.len();
        if [h.temperature_2m.len(), h.relative_humidity_2m.len(), h.pressure_msl.len(), h.wind_speed_10m.len(), h.cloud_cover.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(WeatherUnavailable("ragged hourly arrays".into()));
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let at = NaiveDateTime::parse_from_str(&h.time[i], "%Y-%m-%dT%H:%M")
                .map_err(|e| WeatherUnavailable(format!("bad time `{}`: {e}", h.time[i])))?
                .and_utc();
            let vals = [h.temperature_2m[i], h.relative_humidity_2m[i], h.pressure_msl[i], h.wind_speed_10m[i], h.cloud_cover[i]];
            let [Some(temperature), Some(humidity), Some(pressure), Some(wind), Some(clouds)] = vals else { continue };
            out.push(WeatherObservation { temperature, humidity, pressure, wind, clouds, valid_at: at, location_bucket: bucket });
        }
        Ok(out)
    }
}

impl WeatherProvider for LiveProvider {
    fn fetch(&self, bucket: LocationBucket, hour: DateTime<Utc>) -> Result<Vec<WeatherObservation>, WeatherUnavailable> {
        let day = hour.date_naive().format("%Y-%m-%d").to_string();
        let resp = self
            .client
            .get(&self.url)
            .query(&[
                ("latitude", format!("{:.1}", bucket.lat())),
                ("longitude", format!("{:.1}", bucket.lon())),
                ("start_date", day.clone()),
                ("end_date", day),
                ("hourly", "temperature_2m,relative_humidity_2m,pressure_msl,wind_speed_10m,cloud_cover".into()),
                ("wind_speed_unit", "ms".into()),
                ("timezone", "GMT".into()),
            ])
            .send()
            .map_err(|e| WeatherUnavailable(format!("weather provider unreachable: {e}")))?;
        if !resp.status().is_success() {
            return Err(WeatherUnavailable(format!("weather provider returned {}", resp.status())));
        }
        let body: ArchiveResponse = resp.json().map_err(|e| WeatherUnavailable(format!("bad weather response: {e}")))?;
        LiveProvider::parse(body, bucket)
    }
}

pub struct CachedWeather {
    provider: Box<dyn WeatherProvider>,
    cache: Mutex<HashMap<(LocationBucket, DateTime<Utc>), WeatherObservation>>,
    calls: AtomicU64,
}

impl CachedWeather {
    pub fn new(provider: Box<dyn WeatherProvider>) -> Self {
        CachedWeather { provider, cache: Mutex::new(HashMap::new()), calls: AtomicU64::new(0) }
    }

    pub fn from_config(cfg: &WeatherConfig) -> Result<Self, String> {
        let provider: Box<dyn WeatherProvider> = match cfg.mode {
            WeatherMode::Stub => Box::new(StubProvider(cfg.stub.clone())),
            WeatherMode::Fixture => {
                let path = cfg.fixture_path.as_ref().ok_or("fixture mode needs fixture_path")?;
                Box::new(FixtureProvider::from_csv(path).map_err(|e| e.to_string())?)
            }
            WeatherMode::Live => Box::new(
                LiveProvider::new(cfg.live_url.clone(), StdDuration::from_secs(cfg.timeout_secs)).map_err(|e| e.0)?,
            ),
        };
        Ok(CachedWeather::new(provider))
    }

    /// Number of provider fetches so far.
    pub fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Seeds the cache, e.g. with a bundle's weather rows.
    pub fn preload(&self, rows: impl IntoIterator<Item = WeatherObservation>) {
        let mut c = self.cache.lock().expect("weather cache");
        for r in rows {
            c.insert((r.location_bucket, truncate_to_hour(r.valid_at)), r);
        }
    }

    pub fn lookup_coords(&self, lat: f64, lon: f64, hour: DateTime<Utc>) -> Result<WeatherObservation, WeatherUnavailable> {
        self.lookup(LocationBucket::from_coords(lat, lon), hour)
    }
}

impl WeatherSource for CachedWeather {
    fn lookup(&self, bucket: LocationBucket, hour: DateTime<Utc>) -> Result<WeatherObservation, WeatherUnavailable> {
        let hour = truncate_to_hour(hour);
        let mut cache = self.cache.lock().expect("weather cache");
        if let Some(o) = cache.get(&(bucket, hour)) {
            return Ok(o.clone());
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let rows = self.provider.fetch(bucket, hour)?;
        for mut r in rows {
            let h = truncate_to_hour(r.valid_at);
            if h < hour - Duration::days(2) || h > hour + Duration::days(2) {
                continue;
            }
            r.location_bucket = bucket;
            r.valid_at = h;
            cache.insert((bucket, h), r);
        }
        cache
            .get(&(bucket, hour))
            .cloned()
            .ok_or_else(|| WeatherUnavailable(format!("provider has no data for ({}, {}) at {hour}", bucket.lat(), bucket.lon())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    struct Counting(std::sync::Arc<AtomicU64>);

    impl WeatherProvider for Counting {
        fn fetch(&self, b: LocationBucket, h: DateTime<Utc>) -> Result<Vec<WeatherObservation>, WeatherUnavailable> {
            self.0.fetch_add(1, Ordering::SeqCst);
            StubProvider(StubWeather::default()).fetch(b, h)
        }
    }

    #[test]
    fn second_lookup_is_cached() {
        let n = std::sync::Arc::new(AtomicU64::new(0));
        let w = CachedWeather::new(Box::new(Counting(n.clone())));
        let a = w.lookup_coords(47.37, 8.54, t("2017-05-01T10:20:00Z")).unwrap();
        let b = w.lookup_coords(47.41, 8.49, t("2017-05-01T10:55:00Z")).unwrap();
        assert_eq!(a, b);
        assert_eq!(n.load(Ordering::SeqCst), 1);
        assert_eq!(w.provider_calls(), 1);
        w.lookup_coords(47.37, 8.54, t("2017-05-01T11:00:00Z")).unwrap();
        assert_eq!(w.provider_calls(), 2);
    }

    #[test]
    fn stub_returns_configured_constants() {
        let w = CachedWeather::from_config(&WeatherConfig::default()).unwrap();
        let o = w.lookup_coords(0.0, 0.0, t("2017-05-01T10:20:00Z")).unwrap();
        assert_eq!((o.temperature, o.humidity, o.pressure, o.wind, o.clouds), (15.0, 60.0, 1013.0, 3.0, 50.0));
        assert_eq!(o.valid_at, t("2017-05-01T10:00:00Z"));
    }

    #[test]
    fn fixture_misses_are_errors() {
        let table = WeatherTable::new([WeatherObservation {
            temperature: 22.5,
            humidity: 40.0,
            pressure: 1001.0,
            wind: 1.5,
            clouds: 5.0,
            valid_at: t("2017-05-01T10:00:00Z"),
            location_bucket: LocationBucket::from_coords(50.9, 6.9),
        }]);
        let w = CachedWeather::new(Box::new(FixtureProvider(table)));
        assert_eq!(w.lookup_coords(50.94, 6.91, t("2017-05-01T10:30:00Z")).unwrap().temperature, 22.5);
        assert!(w.lookup_coords(50.94, 6.91, t("2017-05-01T11:30:00Z")).is_err());
    }
}
