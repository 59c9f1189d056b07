//! Batch glue: join mood inputs against sensor histories and weather, and
//! score friend influence over a whole bundle.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analytics::{copresence_events, friend_influence, rank_influencers, CopresenceConfig, InfluenceScore};
use crate::domain::{
    Friendship, FriendshipStatus, LocationBucket, MoodInput, ParticipantProfile, SensorSample, UserId,
    WeatherObservation,
};
use crate::featurize::{
    build_labeled_example, parse_zone, truncate_to_hour, DropReason, FeaturizeConfig, FeaturizeError, LabeledExample,
    WeatherSource, WeatherUnavailable, Zone,
};

/// In-memory weather keyed by (bucket, hour).
#[derive(Debug, Clone, Default)]
pub struct WeatherTable {
    rows: HashMap<(LocationBucket, DateTime<Utc>), WeatherObservation>,
}

impl WeatherTable {
    pub fn new(rows: impl IntoIterator<Item = WeatherObservation>) -> Self {
        let mut t = WeatherTable::default();
        for r in rows {
            t.insert(r);
        }
        t
    }

    /// Later rows for the same key replace earlier ones.
    pub fn insert(&mut self, obs: WeatherObservation) {
        self.rows.insert((obs.location_bucket, truncate_to_hour(obs.valid_at)), obs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl WeatherSource for WeatherTable {
    fn lookup(&self, bucket: LocationBucket, hour: DateTime<Utc>) -> Result<WeatherObservation, WeatherUnavailable> {
        self.rows
            .get(&(bucket, truncate_to_hour(hour)))
            .cloned()
            .ok_or_else(|| WeatherUnavailable(format!("no row for ({}, {}) at {hour}", bucket.lat(), bucket.lon())))
    }
}

/// Zones from the profiles' timezone field; unknown zone ids are an error.
pub fn zones_from_profiles(profiles: &[ParticipantProfile]) -> Result<HashMap<UserId, Zone>, FeaturizeError> {
    profiles.iter().map(|p| Ok((p.user.clone(), parse_zone(&p.timezone)?))).collect()
}

/// Per-user sorted sensor histories, last write wins on duplicate timestamps.
pub fn group_sensors(samples: &[SensorSample]) -> BTreeMap<UserId, Vec<SensorSample>> {
    let mut by_user: BTreeMap<UserId, BTreeMap<DateTime<Utc>, SensorSample>> = BTreeMap::new();
    for s in samples {
        by_user.entry(s.user.clone()).or_default().insert(s.timestamp, s.clone());
    }
    by_user.into_iter().map(|(u, m)| (u, m.into_values().collect())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedMood {
    pub user: UserId,
    pub timestamp: DateTime<Utc>,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutput {
    /// In input mood order.
    pub examples: Vec<LabeledExample>,
    pub dropped: Vec<DroppedMood>,
}

impl JoinOutput {
    pub fn drop_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut c = BTreeMap::new();
        for d in &self.dropped {
            *c.entry(d.reason.as_str()).or_default() += 1;
        }
        c
    }
}

/// Featurizes every mood input. Users missing from `zones` use UTC.
pub fn join_examples(
    moods: &[MoodInput],
    sensors: &BTreeMap<UserId, Vec<SensorSample>>,
    weather: &dyn WeatherSource,
    zones: &HashMap<UserId, Zone>,
    cfg: &FeaturizeConfig,
) -> Result<JoinOutput, FeaturizeError> {
    let utc = Zone::utc();
    let empty = Vec::new();
    let mut out = JoinOutput { examples: Vec::new(), dropped: Vec::new() };
    for m in moods {
        let samples = sensors.get(&m.user).unwrap_or(&empty);
        let zone = zones.get(&m.user).unwrap_or(&utc);
        match build_labeled_example(m, samples, weather, zone, cfg)? {
            Ok(ex) => out.examples.push(ex),
            Err(reason) => out.dropped.push(DroppedMood { user: m.user.clone(), timestamp: m.timestamp, reason }),
        }
    }
    Ok(out)
}

/// Scores every accepted friendship in both directions and ranks each
/// subject's influencers. Subjects without a qualifying friend are absent.
pub fn influence_scores(
    moods: &[MoodInput],
    sensors: &BTreeMap<UserId, Vec<SensorSample>>,
    friendships: &[Friendship],
    cfg: &CopresenceConfig,
) -> BTreeMap<UserId, Vec<InfluenceScore>> {
    let mut by_user: BTreeMap<&UserId, Vec<&MoodInput>> = BTreeMap::new();
    for m in moods {
        by_user.entry(&m.user).or_default().push(m);
    }
    let empty = Vec::new();
    let mut out: BTreeMap<UserId, Vec<InfluenceScore>> = BTreeMap::new();
    for f in friendships.iter().filter(|f| f.status == FriendshipStatus::Accepted) {
        for (subject, friend) in [(&f.a, &f.b), (&f.b, &f.a)] {
            let Some(ms) = by_user.get(subject) else { continue };
            let times: Vec<DateTime<Utc>> = ms.iter().map(|m| m.timestamp).collect();
            let pleasance: Vec<_> = ms.iter().map(|m| m.pleasance).collect();
            let events = copresence_events(
                &times,
                sensors.get(subject).unwrap_or(&empty),
                sensors.get(friend).unwrap_or(&empty),
                cfg,
            );
            if let Some(s) = friend_influence(subject, friend, &pleasance, &events, cfg.min_events) {
                out.entry(subject.clone()).or_default().push(s);
            }
        }
    }
    out.into_iter().map(|(u, s)| (u, rank_influencers(s))).collect()
}
