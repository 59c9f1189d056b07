use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::correlation::pearson_r;
use crate::domain::{Level, SensorSample, UserId};
use crate::featurize::haversine_m;

/// "Same room at the same time".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopresenceConfig {
    pub radius_m: f64,
    pub slack_minutes: i64,
    pub min_events: usize,
}

impl Default for CopresenceConfig {
    fn default() -> Self {
        CopresenceConfig {
            radius_m: 50.0,
            slack_minutes: 30,
            min_events: 5,
        }
    }
}

fn within(samples: &[SensorSample], at: DateTime<Utc>, slack: Duration) -> &[SensorSample] {
    let lo = samples.partition_point(|s| s.timestamp < at - slack);
    let hi = samples.partition_point(|s| s.timestamp <= at + slack);
    &samples[lo..hi.max(lo)]
}

/// For each mood timestamp: `Some(true)` when subject and friend were within
/// the radius during the slack window, `Some(false)` when both were observed
/// but apart, `None` when either side has no usable sample in the window.
///
/// Both sample slices must be sorted by timestamp.
pub fn copresence_events(
    mood_times: &[DateTime<Utc>],
    subject: &[SensorSample],
    friend: &[SensorSample],
    cfg: &CopresenceConfig,
) -> Vec<Option<bool>> {
    let slack = Duration::minutes(cfg.slack_minutes);
    let has_fix = |s: &&SensorSample| s.latitude.is_finite() && s.longitude.is_finite();
    mood_times
        .iter()
        .map(|&t| {
            let mine: Vec<_> = within(subject, t, slack).iter().filter(has_fix).collect();
            let theirs: Vec<_> = within(friend, t, slack).iter().filter(has_fix).collect();
            if mine.is_empty() || theirs.is_empty() {
                return None;
            }
            Some(mine.iter().any(|a| {
                theirs
                    .iter()
                    .any(|b| haversine_m(a.latitude, a.longitude, b.latitude, b.longitude) <= cfg.radius_m)
            }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScore {
    pub subject: UserId,
    pub friend: UserId,
    /// Point-biserial correlation of pleasance with co-presence.
    pub r: f64,
    pub n_events: usize,
    pub n_without: usize,
    pub direction: Direction,
}

/// Correlates the subject's pleasance with the friend's presence.
///
/// Returns `None` unless there are at least `min_events` observations both
/// with and without the friend, and pleasance varies.
pub fn friend_influence(
    subject: &UserId,
    friend: &UserId,
    pleasance: &[Level],
    copresent: &[Option<bool>],
    min_events: usize,
) -> Option<InfluenceScore> {
    let (ys, xs): (Vec<f64>, Vec<f64>) = pleasance
        .iter()
        .zip(copresent)
        .filter_map(|(p, c)| c.map(|c| (p.value() as f64, if c { 1.0 } else { 0.0 })))
        .unzip();
    let with = xs.iter().filter(|x| **x == 1.0).count();
    let without = xs.len() - with;
    if with < min_events.max(1) || without < min_events.max(1) {
        return None;
    }
    let r = pearson_r(&xs, &ys).ok()?;
    Some(InfluenceScore {
        subject: subject.clone(),
        friend: friend.clone(),
        r,
        n_events: with,
        n_without: without,
        direction: if r < 0.0 { Direction::Negative } else { Direction::Positive },
    })
}

/// Strongest influence first (by |r|), ties by friend id.
pub fn rank_influencers(mut scores: Vec<InfluenceScore>) -> Vec<InfluenceScore> {
    scores.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()).then_with(|| a.friend.cmp(&b.friend)));
    scores
}
