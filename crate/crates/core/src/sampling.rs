//! Experience-sampling schedules: a fixed number of randomly placed daily
//! prompts inside the participant's awake window, kept a minimum gap apart.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::UserId;
use crate::featurize::Zone;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("awake window of {window_minutes} min is too short: {n} prompts {gap_minutes} min apart need at least {required_minutes} min")]
    WindowTooShort {
        window_minutes: i64,
        required_minutes: i64,
        n: usize,
        gap_minutes: i64,
    },
    #[error("awake window must end after it starts")]
    InvertedWindow,
    #[error("at least one prompt per day is required")]
    NoPrompts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub awake_start: NaiveTime,
    pub awake_end: NaiveTime,
    pub n_prompts: usize,
    pub min_gap_minutes: i64,
    pub expiry_minutes: i64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            awake_start: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            awake_end: NaiveTime::from_hms_opt(22, 0, 0).unwrap(),
            n_prompts: 4,
            min_gap_minutes: 90,
            expiry_minutes: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptId {
    pub date: NaiveDate,
    pub index: usize,
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.date, self.index)
    }
}

impl std::str::FromStr for PromptId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (d, i) = s.split_once('#').ok_or_else(|| format!("bad prompt id `{s}`"))?;
        Ok(PromptId {
            date: d.parse().map_err(|_| format!("bad prompt date `{d}`"))?,
            index: i.parse().map_err(|_| format!("bad prompt index `{i}`"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: PromptId,
    pub local: NaiveDateTime,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSchedule {
    pub user: UserId,
    pub date: NaiveDate,
    pub awake_start: NaiveTime,
    pub awake_end: NaiveTime,
    pub seed: u64,
    pub prompts: Vec<Prompt>,
}

// FNV-1a, stable across platforms and releases
fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn schedule_rng(user: &UserId, date: NaiveDate, seed: u64) -> ChaCha8Rng {
    let key = format!("{}|{}|{}", user.as_str(), date, seed);
    ChaCha8Rng::seed_from_u64(stable_hash(key.as_bytes()))
}

/// Draws the day's prompts.
///
/// `n` offsets are drawn uniformly from the awake window shrunk by
/// `(n - 1) * min_gap`, sorted, and the i-th is pushed back by `i * min_gap`.
/// Gaps are then at least `min_gap` without any rejection loop.
pub fn generate_schedule(
    user: &UserId,
    date: NaiveDate,
    zone: &Zone,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<PromptSchedule, ScheduleError> {
    let n = cfg.n_prompts;
    if n == 0 {
        return Err(ScheduleError::NoPrompts);
    }
    if cfg.awake_end <= cfg.awake_start {
        return Err(ScheduleError::InvertedWindow);
    }
    let window = (cfg.awake_end - cfg.awake_start).num_seconds();
    let gap = cfg.min_gap_minutes * 60;
    let required = (n as i64 - 1) * gap;
    if window < required {
        return Err(ScheduleError::WindowTooShort {
            window_minutes: window / 60,
            required_minutes: required / 60,
            n,
            gap_minutes: cfg.min_gap_minutes,
        });
    }
    let slack = window - required;
    let mut rng = schedule_rng(user, date, seed);
    let mut offsets: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=slack)).collect();
    offsets.sort_unstable();
    let start = date.and_time(cfg.awake_start);
    let prompts = offsets
        .into_iter()
        .enumerate()
        .map(|(i, off)| {
            let local = start + Duration::seconds(off + i as i64 * gap);
            Prompt {
                id: PromptId { date, index: i },
                local,
                at: zone.to_utc(local),
            }
        })
        .collect();
    Ok(PromptSchedule {
        user: user.clone(),
        date,
        awake_start: cfg.awake_start,
        awake_end: cfg.awake_end,
        seed,
        prompts,
    })
}

/// Earliest unanswered prompt that has fired and not yet expired.
pub fn due_prompt(
    now: DateTime<Utc>,
    schedule: &PromptSchedule,
    answered: &BTreeSet<PromptId>,
    expiry: Duration,
) -> Option<PromptId> {
    schedule
        .prompts
        .iter()
        .find(|p| p.at <= now && now - p.at <= expiry && !answered.contains(&p.id))
        .map(|p| p.id)
}
