//! Synthetic cohorts with a planted mood function, for checking that the
//! pipeline recovers known structure without the original study data.
//!
//! Users live in one of three cities with different climates. Each wears a
//! watch that uploads every 15 minutes between 07:00 and 23:00 local time,
//! with occasional watch-off gaps, and answers four prompts a day. The
//! reported mood follows [`PlantedRule`], optionally shifted by planted
//! friend effects during co-presence, then corrupted with label noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveTime, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    encode_mood_state, BigFive, Friendship, FriendshipStatus, Gender, Level, LocationBucket,
    MoodInput, MoodSource, ParticipantProfile, SensorSample, UserId, WeatherObservation,
};
use crate::featurize::{parse_zone, truncate_to_hour, Zone};
use crate::sampling::{generate_schedule, SamplingConfig, ScheduleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown planted rule `{0}`")]
    UnknownRule(String),
    #[error("invalid cohort: {0}")]
    Invalid(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantedRule {
    /// Pleasance 2 when the temperature exceeds 18 °C, else 1. Activation 0
    /// from 20:00, 2 during 11–13 and 17–19, else 1.
    #[serde(rename = "weather-hour")]
    WeatherHour,
}

impl PlantedRule {
    pub const TEMPERATURE_THRESHOLD: f64 = 18.0;

    pub fn parse(id: &str) -> Result<Self, SimError> {
        match id {
            "weather-hour" => Ok(PlantedRule::WeatherHour),
            other => Err(SimError::UnknownRule(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlantedRule::WeatherHour => "weather-hour",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            PlantedRule::WeatherHour => {
                "pleasance = 2 if temperature > 18 C else 1; activation = 0 if local hour >= 20, \
                 2 if local hour in 11..=13 or 17..=19, else 1"
            }
        }
    }

    /// Noise-free label for the given context.
    pub fn label(self, temperature: f64, local_hour: u32) -> (Level, Level) {
        match self {
            PlantedRule::WeatherHour => {
                let p = if temperature > Self::TEMPERATURE_THRESHOLD { Level::HIGH } else { Level::MEDIUM };
                let a = if local_hour >= 20 {
                    Level::LOW
                } else if (11..=13).contains(&local_hour) || (17..=19).contains(&local_hour) {
                    Level::HIGH
                } else {
                    Level::MEDIUM
                };
                (p, a)
            }
        }
    }
}

/// A friendship whose presence shifts the subject's pleasance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub subject: UserId,
    pub friend: UserId,
    /// Added to the subject's pleasance (clamped to 0..=2) while together.
    pub pleasance_effect: i8,
    /// Fraction of the subject's prompts the friend is present for.
    pub copresence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_users: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub rule: PlantedRule,
    pub noise: f64,
    pub sampling: SamplingConfig,
    pub edges: Vec<PlantedEdge>,
}

pub fn user_id(index: usize) -> UserId {
    UserId::new(format!("u{index:02}")).expect("valid id")
}

impl CohortSpec {
    /// `n_users` users over `n_days` starting 2017-05-01, with the default
    /// planted edges (see [`default_edges`]).
    pub fn new(seed: u64, n_users: usize, n_days: usize, noise: f64) -> Self {
        CohortSpec {
            seed,
            n_users,
            n_days,
            start_date: NaiveDate::from_ymd_opt(2017, 5, 1).unwrap(),
            rule: PlantedRule::WeatherHour,
            noise,
            sampling: SamplingConfig::default(),
            edges: default_edges(n_users),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_users == 0 {
            return Err(SimError::Invalid("n_users must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SimError::Invalid(format!("noise {} outside [0, 1]", self.noise)));
        }
        let users: BTreeSet<UserId> = (0..self.n_users).map(user_id).collect();
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            if !users.contains(&e.subject) || !users.contains(&e.friend) || e.subject == e.friend {
                return Err(SimError::Invalid(format!("bad edge {} -> {}", e.subject, e.friend)));
            }
            if city_of(&e.subject) != city_of(&e.friend) {
                return Err(SimError::Invalid(format!("{} and {} live in different cities", e.subject, e.friend)));
            }
            if !(0.0..=1.0).contains(&e.copresence_rate) {
                return Err(SimError::Invalid("copresence_rate outside [0, 1]".into()));
            }
            if !pairs.insert(crate::domain::pair_key(&e.subject, &e.friend)) {
                return Err(SimError::Invalid("duplicate edge".into()));
            }
        }
        Ok(())
    }
}

/// u00 is cheered up by u03, u01 is brought down by u04, and u06 keeps u00
/// company with no effect. Users `i` and `i + 3` share a city.
pub fn default_edges(n_users: usize) -> Vec<PlantedEdge> {
    let mut edges = Vec::new();
    let mut add = |s: usize, f: usize, effect: i8| {
        if f < n_users {
            edges.push(PlantedEdge {
                subject: user_id(s),
                friend: user_id(f),
                pleasance_effect: effect,
                copresence_rate: 0.4,
            });
        }
    };
    add(0, 3, 1);
    add(1, 4, -1);
    add(0, 6, 0);
    edges
}

struct City {
    name: &'static str,
    lat: f64,
    lon: f64,
    zone: &'static str,
    base_temp: f64,
}

const CITIES: [City; 3] = [
    City { name: "boston", lat: 42.36, lon: -71.06, zone: "America/New_York", base_temp: 10.0 },
    City { name: "cologne", lat: 50.94, lon: 6.96, zone: "Europe/Berlin", base_temp: 16.0 },
    City { name: "zurich", lat: 47.37, lon: 8.54, zone: "Europe/Zurich", base_temp: 19.0 },
];

fn city_index(user_index: usize) -> usize {
    user_index % CITIES.len()
}

fn city_of(user: &UserId) -> Option<usize> {
    user.as_str().trim_start_matches('u').parse::<usize>().ok().map(city_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTruth {
    pub subject: UserId,
    pub friend: UserId,
    pub pleasance_effect: i8,
    /// Intervals during which the friend was placed next to the subject.
    pub windows: Vec<(DateTime<Utc>, DateTime<Utc>)>,
    /// Subject mood inputs inside a window.
    pub n_copresent_moods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_users: usize,
    pub n_days: usize,
    pub rule: PlantedRule,
    pub rule_description: String,
    pub noise: f64,
    pub n_sensor_samples: usize,
    pub n_moods: usize,
    /// Mood inputs with an own sensor sample within ±15 min.
    pub expected_joined: usize,
    /// Mood inputs whose reported cell differs from the planted one.
    pub n_flipped: usize,
    pub cities: BTreeMap<String, Vec<UserId>>,
    pub edges: Vec<EdgeTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub sensors: Vec<SensorSample>,
    pub moods: Vec<MoodInput>,
    pub weather: Vec<WeatherObservation>,
    pub profiles: Vec<ParticipantProfile>,
    pub friendships: Vec<Friendship>,
    /// Noise-free, effect-adjusted label of each mood input, same order.
    pub true_labels: Vec<(Level, Level)>,
    pub manifest: Manifest,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_WEATHER: u64 = 1 << 40;
const STREAM_EDGES: u64 = 2 << 40;
const STREAM_NOISE: u64 = 3 << 40;

struct Person {
    id: UserId,
    city: usize,
    zone: Zone,
    home: (f64, f64),
    work: (f64, f64),
}

impl Person {
    fn base_position(&self, at: DateTime<Utc>) -> (f64, f64) {
        let local = self.zone.local(at);
        let workday = !matches!(local.weekday(), Weekday::Sat | Weekday::Sun);
        if workday && (9..17).contains(&local.hour()) {
            self.work
        } else {
            self.home
        }
    }
}

fn jitter<R: Rng>(rng: &mut R, (lat, lon): (f64, f64)) -> (f64, f64) {
    // roughly ±5 m
    (lat + rng.gen_range(-4.5e-5..4.5e-5), lon + rng.gen_range(-4.5e-5..4.5e-5))
}

pub fn simulate(spec: &CohortSpec) -> Result<Cohort, SimError> {
    spec.validate()?;
    let people: Vec<Person> = (0..spec.n_users)
        .map(|i| {
            let mut rng = stream(spec.seed, i as u64 * 4);
            let city = city_index(i);
            let c = &CITIES[city];
            let mut spot = || (c.lat + rng.gen_range(-0.02..0.02), c.lon + rng.gen_range(-0.02..0.02));
            let home = spot();
            let work = spot();
            Person {
                id: user_id(i),
                city,
                zone: parse_zone(c.zone).expect("known zone"),
                home,
                work,
            }
        })
        .collect();
    let index_of: HashMap<UserId, usize> = people.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();

    let days: Vec<NaiveDate> = (0..spec.n_days).map(|d| spec.start_date + Duration::days(d as i64)).collect();
    let first_hour = CITIES
        .iter()
        .map(|c| parse_zone(c.zone).unwrap().to_utc(spec.start_date.and_hms_opt(0, 0, 0).unwrap()))
        .min()
        .unwrap();
    let n_hours = (spec.n_days as i64 + 2) * 24;
    let weather = city_weather(spec.seed, first_hour, n_hours);

    // prompts first: co-presence windows are anchored on them
    let mut prompts: Vec<Vec<DateTime<Utc>>> = Vec::with_capacity(people.len());
    for p in &people {
        let mut times = Vec::new();
        for &d in &days {
            let s = generate_schedule(&p.id, d, &p.zone, &spec.sampling, spec.seed)?;
            times.extend(s.prompts.iter().map(|pr| pr.at));
        }
        prompts.push(times);
    }

    let mut edge_rng = stream(spec.seed, STREAM_EDGES);
    let mut edges = Vec::with_capacity(spec.edges.len());
    // friend index -> windows where they shadow `subject`
    let mut shadowing: HashMap<usize, Vec<(DateTime<Utc>, DateTime<Utc>, usize)>> = HashMap::new();
    for e in &spec.edges {
        let s = index_of[&e.subject];
        let f = index_of[&e.friend];
        let mut windows = Vec::new();
        for &t in &prompts[s] {
            if edge_rng.gen_bool(e.copresence_rate) {
                let w = (t - Duration::minutes(45), t + Duration::minutes(45));
                windows.push(w);
                shadowing.entry(f).or_default().push((w.0, w.1, s));
            }
        }
        edges.push(EdgeTruth {
            subject: e.subject.clone(),
            friend: e.friend.clone(),
            pleasance_effect: e.pleasance_effect,
            windows,
            n_copresent_moods: 0,
        });
    }

    let mut sensors: Vec<Vec<SensorSample>> = Vec::with_capacity(people.len());
    for (i, p) in people.iter().enumerate() {
        let mut rng = stream(spec.seed, i as u64 * 4 + 1);
        let shadows = shadowing.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        sensors.push(person_samples(&mut rng, p, &people, shadows, &days));
    }

    let mut noise_rng = stream(spec.seed, STREAM_NOISE);
    let mut moods = Vec::new();
    let mut true_labels = Vec::new();
    let mut expected_joined = 0;
    let mut n_flipped = 0;
    for (i, p) in people.iter().enumerate() {
        for &t in &prompts[i] {
            let local = p.zone.local(t);
            let temp = weather[&(p.city, truncate_to_hour(t))].temperature;
            let (mut pl, al) = spec.rule.label(temp, local.hour());
            for e in edges.iter_mut().filter(|e| e.subject == p.id) {
                if e.windows.iter().any(|(a, b)| *a <= t && t <= *b) {
                    e.n_copresent_moods += 1;
                    pl = Level::new("pleasance", (pl.value() as i64 + e.pleasance_effect as i64).clamp(0, 2))
                        .expect("clamped");
                }
            }
            let truth = encode_mood_state(pl, al);
            let reported = if noise_rng.gen_bool(spec.noise) {
                // uniformly one of the other eight cells
                let mut code = noise_rng.gen_range(1..=8u8);
                if code >= truth.code() {
                    code += 1;
                }
                crate::domain::MoodState::from_code(code as i64).unwrap()
            } else {
                truth
            };
            if reported != truth {
                n_flipped += 1;
            }
            let (rp, ra) = crate::domain::decode_mood_state(reported);
            let tol = Duration::minutes(15);
            if sensors[i].iter().any(|s| (s.timestamp - t).abs() <= tol) {
                expected_joined += 1;
            }
            moods.push(MoodInput {
                user: p.id.clone(),
                timestamp: t,
                pleasance: rp,
                activation: ra,
                source: MoodSource::Prompted,
            });
            true_labels.push((pl, al));
        }
    }

    let flat_sensors: Vec<SensorSample> = sensors.into_iter().flatten().collect();
    let weather_rows = weather_rows(&weather, &flat_sensors, &people);
    let profiles = people.iter().enumerate().map(|(i, p)| profile(spec.seed, i, p)).collect();
    let friendships = spec
        .edges
        .iter()
        .map(|e| Friendship {
            a: e.subject.clone(),
            b: e.friend.clone(),
            status: FriendshipStatus::Accepted,
            share_mood_a_to_b: true,
            share_mood_b_to_a: true,
        })
        .collect();
    let mut cities: BTreeMap<String, Vec<UserId>> = BTreeMap::new();
    for p in &people {
        cities.entry(CITIES[p.city].name.to_string()).or_default().push(p.id.clone());
    }
    let manifest = Manifest {
        seed: spec.seed,
        n_users: spec.n_users,
        n_days: spec.n_days,
        rule: spec.rule,
        rule_description: spec.rule.description().to_string(),
        noise: spec.noise,
        n_sensor_samples: flat_sensors.len(),
        n_moods: moods.len(),
        expected_joined,
        n_flipped,
        cities,
        edges,
    };
    Ok(Cohort {
        spec: spec.clone(),
        sensors: flat_sensors,
        moods,
        weather: weather_rows,
        profiles,
        friendships,
        true_labels,
        manifest,
    })
}

fn city_weather(seed: u64, first_hour: DateTime<Utc>, n_hours: i64) -> HashMap<(usize, DateTime<Utc>), WeatherObservation> {
    let mut rng = stream(seed, STREAM_WEATHER);
    let mut out = HashMap::new();
    let daily = Normal::new(0.0, 3.0).unwrap();
    let hourly = Normal::new(0.0, 0.4).unwrap();
    for (ci, c) in CITIES.iter().enumerate() {
        let zone = parse_zone(c.zone).unwrap();
        let mut day_offset = 0.0;
        let mut pressure = 1013.0;
        let mut current_day = None;
        for h in 0..n_hours {
            let at = first_hour + Duration::hours(h);
            let local = zone.local(at);
            if current_day != Some(local.date()) {
                current_day = Some(local.date());
                day_offset = daily.sample(&mut rng);
                pressure = 1013.0 + rng.gen_range(-12.0..12.0);
            }
            let diurnal = 5.0 * (2.0 * std::f64::consts::PI * (local.hour() as f64 - 9.0) / 24.0).sin();
            let temperature = c.base_temp + day_offset + diurnal + hourly.sample(&mut rng);
            out.insert(
                (ci, at),
                WeatherObservation {
                    temperature: (temperature * 10.0).round() / 10.0,
                    humidity: rng.gen_range(30.0f64..95.0).round(),
                    pressure: ((pressure + rng.gen_range(-1.0..1.0)) * 10.0f64).round() / 10.0,
                    wind: (rng.gen_range(0.0f64..9.0) * 10.0).round() / 10.0,
                    clouds: rng.gen_range(0.0f64..100.0).round(),
                    valid_at: at,
                    location_bucket: LocationBucket::from_coords(c.lat, c.lon),
                },
            );
        }
    }
    out
}

/// One row per (bucket visited by anyone in the city, hour).
fn weather_rows(
    weather: &HashMap<(usize, DateTime<Utc>), WeatherObservation>,
    sensors: &[SensorSample],
    people: &[Person],
) -> Vec<WeatherObservation> {
    let city_of_user: HashMap<&UserId, usize> = people.iter().map(|p| (&p.id, p.city)).collect();
    let mut buckets: BTreeSet<(usize, LocationBucket)> = BTreeSet::new();
    for s in sensors {
        buckets.insert((city_of_user[&s.user], LocationBucket::from_coords(s.latitude, s.longitude)));
    }
    let mut keys: Vec<&(usize, DateTime<Utc>)> = weather.keys().collect();
    keys.sort();
    let mut rows = Vec::new();
    for &(city, bucket) in &buckets {
        for key in keys.iter().filter(|k| k.0 == city) {
            let mut obs = weather[key].clone();
            obs.location_bucket = bucket;
            rows.push(obs);
        }
    }
    rows.sort_by(|a, b| (a.location_bucket, a.valid_at).cmp(&(b.location_bucket, b.valid_at)));
    rows
}

fn person_samples(
    rng: &mut ChaCha8Rng,
    p: &Person,
    people: &[Person],
    shadows: &[(DateTime<Utc>, DateTime<Utc>, usize)],
    days: &[NaiveDate],
) -> Vec<SensorSample> {
    let hr_noise = Normal::new(0.0, 6.0).unwrap();
    let mut out = Vec::new();
    for &d in days {
        if rng.gen_bool(0.03) {
            continue; // watch left at home
        }
        let gap = rng.gen_bool(0.15).then(|| {
            let start = d.and_time(NaiveTime::from_hms_opt(rng.gen_range(8..20), 0, 0).unwrap());
            (start, start + Duration::hours(2))
        });
        let mut local = d.and_time(NaiveTime::from_hms_opt(7, 0, 0).unwrap());
        let end = d.and_time(NaiveTime::from_hms_opt(23, 0, 0).unwrap());
        while local <= end {
            let this = local;
            local += Duration::minutes(15);
            if gap.is_some_and(|(a, b)| this >= a && this < b) {
                continue;
            }
            let t = p.zone.to_utc(this);
            let anchor = match shadows.iter().find(|(a, b, _)| *a <= t && t <= *b) {
                Some((_, _, subject)) => people[*subject].base_position(t),
                None => p.base_position(t),
            };
            let (lat, lon) = jitter(rng, anchor);
            let activity: u8 = match rng.gen_range(0..100) {
                0..=19 => 0,
                20..=49 => 1,
                50..=74 => 2,
                75..=89 => 3,
                90..=96 => 4,
                _ => 5,
            };
            let vmc = (activity as f64 * 300.0 + rng.gen_range(0.0..250.0)).round();
            let heart_rate = (62.0 + activity as f64 * 8.0 + hr_noise.sample(rng)).clamp(40.0, 200.0).round();
            out.push(SensorSample {
                user: p.id.clone(),
                timestamp: t,
                heart_rate,
                activity,
                vmc,
                light_level: rng.gen_range(0..=5),
                latitude: (lat * 1e6).round() / 1e6,
                longitude: (lon * 1e6).round() / 1e6,
            });
        }
    }
    out.sort_by_key(|s| s.timestamp);
    out.dedup_by_key(|s| s.timestamp);
    out
}

fn profile(seed: u64, index: usize, p: &Person) -> ParticipantProfile {
    let mut rng = stream(seed, index as u64 * 4 + 2);
    let score = Normal::new(3.0, 0.7).unwrap();
    let gender = match rng.gen_range(0..10) {
        0..=3 => Gender::Female,
        4..=7 => Gender::Male,
        _ => Gender::Unknown,
    };
    let mut trait_score = || ((score.sample(&mut rng) as f64).clamp(1.0, 5.0) * 100.0).round() / 100.0;
    let big_five = BigFive {
        neuroticism: trait_score(),
        extraversion: trait_score(),
        openness: trait_score(),
        agreeableness: trait_score(),
        conscientiousness: trait_score(),
    };
    let answered = rng.gen_bool(0.55);
    ParticipantProfile {
        user: p.id.clone(),
        age: answered.then(|| rng.gen_range(22..=59) as f64),
        gender: if answered { gender } else { Gender::Unknown },
        big_five: answered.then_some(big_five),
        timezone: CITIES[p.city].zone.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_table() {
        let r = PlantedRule::WeatherHour;
        assert_eq!(r.label(18.5, 12), (Level::HIGH, Level::HIGH));
        assert_eq!(r.label(18.0, 9), (Level::MEDIUM, Level::MEDIUM));
        assert_eq!(r.label(25.0, 17).1, Level::HIGH);
        assert_eq!(r.label(25.0, 16).1, Level::MEDIUM);
        assert_eq!(r.label(25.0, 19).1, Level::HIGH);
        assert_eq!(r.label(25.0, 20).1, Level::LOW);
    }

    #[test]
    fn unknown_rule() {
        assert!(matches!(PlantedRule::parse("moon-phase"), Err(SimError::UnknownRule(_))));
        assert_eq!(PlantedRule::parse("weather-hour").unwrap(), PlantedRule::WeatherHour);
    }

    #[test]
    fn spec_validation() {
        let mut s = CohortSpec::new(0, 3, 2, 0.1);
        s.noise = 1.5;
        assert!(simulate(&s).is_err());
        let s = CohortSpec::new(0, 0, 2, 0.1);
        assert!(simulate(&s).is_err());
        let mut s = CohortSpec::new(0, 6, 2, 0.1);
        s.edges.push(PlantedEdge { subject: user_id(0), friend: user_id(1), pleasance_effect: 1, copresence_rate: 0.5 });
        assert!(matches!(simulate(&s), Err(SimError::Invalid(_))), "different cities");
    }

    #[test]
    fn small_cohort_shape() {
        let c = simulate(&CohortSpec::new(3, 4, 3, 0.0)).unwrap();
        assert_eq!(c.moods.len(), 4 * 3 * 4);
        assert_eq!(c.manifest.n_flipped, 0);
        for (m, t) in c.moods.iter().zip(&c.true_labels) {
            assert_eq!((m.pleasance, m.activation), *t);
        }
        for w in c.sensors.windows(2) {
            assert!(w[0].user != w[1].user || w[0].timestamp < w[1].timestamp);
        }
        for s in &c.sensors {
            s.validate().unwrap();
        }
        for w in &c.weather {
            w.validate().unwrap();
        }
        assert!(c.manifest.expected_joined <= c.moods.len());
    }

    #[test]
    fn deterministic() {
        let spec = CohortSpec::new(11, 5, 4, 0.2);
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }
}
