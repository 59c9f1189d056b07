use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::domain::Level;
use crate::featurize::LabeledExample;

/// Distribution of one 0/1/2-coded mood dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub high: u64,
    pub medium: u64,
    pub low: u64,
    pub pct_high: f64,
    pub pct_medium: f64,
    pub pct_low: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

impl LevelStats {
    pub fn from_counts(low: u64, medium: u64, high: u64) -> Result<Self, AnalyticsError> {
        let n = low + medium + high;
        if n == 0 {
            return Err(AnalyticsError::Empty);
        }
        // exact integer moments: sum and sum of squares of the level codes
        let s1 = (medium + 2 * high) as u128;
        let s2 = (medium + 4 * high) as u128;
        let nn = n as u128;
        let var = (nn * s2 - s1 * s1) as f64 / (nn * nn) as f64;
        let pct = |c: u64| 100.0 * c as f64 / n as f64;
        Ok(LevelStats {
            high,
            medium,
            low,
            pct_high: pct(high),
            pct_medium: pct(medium),
            pct_low: pct(low),
            mean: s1 as f64 / n as f64,
            sd: var.max(0.0).sqrt(),
        })
    }

    pub fn n(&self) -> u64 {
        self.high + self.medium + self.low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveReport {
    pub n: u64,
    pub pleasance: LevelStats,
    pub activation: LevelStats,
}

fn tally(levels: impl Iterator<Item = Level>) -> [u64; 3] {
    let mut c = [0u64; 3];
    for l in levels {
        c[l.value() as usize] += 1;
    }
    c
}

/// Counts, percentages, mean and population SD per dimension.
pub fn descriptive_stats(labels: &[(Level, Level)]) -> Result<DescriptiveReport, AnalyticsError> {
    if labels.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let p = tally(labels.iter().map(|l| l.0));
    let a = tally(labels.iter().map(|l| l.1));
    Ok(DescriptiveReport {
        n: labels.len() as u64,
        pleasance: LevelStats::from_counts(p[0], p[1], p[2])?,
        activation: LevelStats::from_counts(a[0], a[1], a[2])?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourStat {
    pub hour: u32,
    pub mean_pleasance: f64,
    pub mean_activation: f64,
    pub n: usize,
}

/// Means per local hour. Hours without observations are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub hours: Vec<HourStat>,
}

impl HourlyProfile {
    pub fn get(&self, hour: u32) -> Option<&HourStat> {
        self.hours.iter().find(|h| h.hour == hour)
    }

    pub fn peak_activation_hour(&self) -> Option<u32> {
        self.hours
            .iter()
            .fold(None::<&HourStat>, |best, h| match best {
                Some(b) if b.mean_activation >= h.mean_activation => Some(b),
                _ => Some(h),
            })
            .map(|h| h.hour)
    }
}

pub fn hourly_profile(examples: &[LabeledExample]) -> HourlyProfile {
    let mut sums = [(0u64, 0u64, 0usize); 24];
    for ex in examples {
        let h = (ex.features.hour_of_day as usize).min(23);
        sums[h].0 += ex.pleasance.value() as u64;
        sums[h].1 += ex.activation.value() as u64;
        sums[h].2 += 1;
    }
    HourlyProfile {
        hours: sums
            .iter()
            .enumerate()
            .filter(|(_, s)| s.2 > 0)
            .map(|(h, s)| HourStat {
                hour: h as u32,
                mean_pleasance: s.0 as f64 / s.2 as f64,
                mean_activation: s.1 as f64 / s.2 as f64,
                n: s.2,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{encode_mood_state, UserId};
    use crate::featurize::{FeatureVector, ImputationFlags};
    use chrono::Utc;

    #[test]
    fn reported_pleasance_distribution() {
        let s = LevelStats::from_counts(515, 2855, 13436).unwrap();
        assert!((s.mean - 1.7688).abs() <= 0.0005, "{}", s.mean);
        assert!((s.sd - 0.4889).abs() <= 0.0015, "{}", s.sd);
        assert!((s.pct_high - 79.94).abs() < 0.01);
    }

    #[test]
    fn reported_activation_distribution() {
        let s = LevelStats::from_counts(4360, 9784, 2662).unwrap();
        assert!((s.mean - 0.8989).abs() <= 0.0005, "{}", s.mean);
        assert!((s.sd - 0.6384).abs() <= 0.0015, "{}", s.sd);
        assert!((s.pct_low - 25.94).abs() < 0.01);
    }

    #[test]
    fn degenerate_all_high() {
        let labels = vec![(Level::HIGH, Level::HIGH); 10];
        let r = descriptive_stats(&labels).unwrap();
        assert_eq!(r.pleasance.mean, 2.0);
        assert_eq!(r.pleasance.sd, 0.0);
        assert!(descriptive_stats(&[]).is_err());
    }

    fn ex(hour: f64, p: Level, a: Level) -> LabeledExample {
        let mut f = [0.0; 13];
        f[5] = hour;
        LabeledExample {
            features: FeatureVector::from_array(f),
            pleasance: p,
            activation: a,
            mood_state: encode_mood_state(p, a),
            user: UserId::new("u").unwrap(),
            timestamp: Utc::now(),
            imputed: ImputationFlags::default(),
        }
    }

    #[test]
    fn hourly_means() {
        let one = hourly_profile(&[ex(12.0, Level::HIGH, Level::MEDIUM)]);
        assert_eq!(one.hours.len(), 1);
        assert_eq!(one.get(12).unwrap(), &HourStat { hour: 12, mean_pleasance: 2.0, mean_activation: 1.0, n: 1 });
        let two = hourly_profile(&[ex(9.0, Level::HIGH, Level::HIGH), ex(9.0, Level::LOW, Level::LOW)]);
        let h = two.get(9).unwrap();
        assert_eq!((h.mean_pleasance, h.mean_activation, h.n), (1.0, 1.0, 2));
        assert!(two.get(10).is_none());
    }
}
