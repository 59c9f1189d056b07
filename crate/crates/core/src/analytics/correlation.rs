use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::special::beta_inc_reg;
use super::AnalyticsError;
use crate::domain::{Gender, ParticipantProfile, UserId};
use crate::featurize::LabeledExample;

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AnalyticsError::TooFew { needed: 3, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-tailed p-value of `H0: rho = 0` from the t statistic with `n - 2` df.
pub fn t_test_p_value(r: f64, n: usize) -> Result<f64, AnalyticsError> {
    if n < 3 {
        return Err(AnalyticsError::TooFew { needed: 3, got: n });
    }
    if !(r.abs() <= 1.0) {
        return Err(AnalyticsError::InvalidCorrelation(r));
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t2 = r * r * df / (1.0 - r * r);
    // P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2)
    Ok(beta_inc_reg(df / 2.0, 0.5, df / (df + t2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "***")]
    Three,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "")]
    None,
}

impl Stars {
    pub fn from_p(p: f64) -> Stars {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::Three => "***",
            Stars::Two => "**",
            Stars::One => "*",
            Stars::None => "",
        }
    }
}

pub fn significance_stars(r: f64, n: usize) -> Result<Stars, AnalyticsError> {
    t_test_p_value(r, n).map(Stars::from_p)
}

/// Pairwise-complete correlation table. `None` marks pairs without enough
/// jointly observed, non-constant data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub variables: Vec<String>,
    pub r: Vec<Vec<Option<f64>>>,
    pub stars: Vec<Vec<Option<Stars>>>,
    pub n: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<(f64, Stars)> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        Some((self.r[i][j]?, self.stars[i][j]?))
    }

    /// Variables whose diagonal is absent: too few values or constant.
    pub fn absent_variables(&self) -> Vec<&str> {
        (0..self.variables.len())
            .filter(|&i| self.r[i][i].is_none())
            .map(|i| self.variables[i].as_str())
            .collect()
    }
}

fn pair_stats(x: &[Option<f64>], y: &[Option<f64>]) -> (usize, Option<(f64, Stars)>) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip();
    let n = xs.len();
    let stats = pearson_r(&xs, &ys)
        .ok()
        .and_then(|r| significance_stars(r, n).ok().map(|s| (r, s)));
    (n, stats)
}

/// Correlates every pair of columns over the rows where both are present.
/// Each unordered pair is computed once and mirrored.
pub fn correlation_matrix(variables: Vec<String>, columns: &[Vec<Option<f64>>]) -> CorrelationMatrix {
    let p = columns.len();
    let mut r = vec![vec![None; p]; p];
    let mut stars = vec![vec![None; p]; p];
    let mut n = vec![vec![0usize; p]; p];
    for i in 0..p {
        for j in i..p {
            let (count, stats) = pair_stats(&columns[i], &columns[j]);
            let stats = if i == j { stats.map(|_| (1.0, Stars::Three)) } else { stats };
            n[i][j] = count;
            n[j][i] = count;
            r[i][j] = stats.map(|s| s.0);
            r[j][i] = r[i][j];
            stars[i][j] = stats.map(|s| s.1);
            stars[j][i] = stars[i][j];
        }
    }
    CorrelationMatrix { variables, r, stars, n }
}

pub const TABLE3_VARIABLES: [&str; 21] = [
    "pleasance",
    "activation",
    "age",
    "gender_male",
    "neuroticism",
    "extraversion",
    "openness",
    "agreeableness",
    "conscientiousness",
    "heart_rate",
    "light_level",
    "activity",
    "vmc",
    "vmc_window",
    "temperature",
    "humidity",
    "pressure",
    "wind",
    "clouds",
    "weekend_holiday",
    "hour",
];

/// Column-major data for the correlation table: mood labels and features per
/// example, joined with the participant's profile where one exists.
pub fn table3_columns(
    examples: &[LabeledExample],
    profiles: &HashMap<UserId, ParticipantProfile>,
) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let mut cols = vec![Vec::with_capacity(examples.len()); TABLE3_VARIABLES.len()];
    for ex in examples {
        let profile = profiles.get(&ex.user);
        let big5 = profile.and_then(|p| p.big_five);
        let f = &ex.features;
        let row = [
            Some(ex.pleasance.value() as f64),
            Some(ex.activation.value() as f64),
            profile.and_then(|p| p.age),
            profile.and_then(|p| match p.gender {
                Gender::Male => Some(1.0),
                Gender::Female => Some(0.0),
                Gender::Unknown => None,
            }),
            big5.map(|b| b.neuroticism),
            big5.map(|b| b.extraversion),
            big5.map(|b| b.openness),
            big5.map(|b| b.agreeableness),
            big5.map(|b| b.conscientiousness),
            Some(f.heart_rate),
            Some(f.light_level),
            Some(f.activity),
            Some(f.vmc),
            (!ex.imputed.vmc_window).then_some(f.vmc_last_4h),
            Some(f.temperature),
            Some(f.humidity),
            Some(f.pressure),
            Some(f.wind),
            Some(f.clouds),
            Some(f.is_weekend_or_holiday),
            Some(f.hour_of_day),
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    (TABLE3_VARIABLES.iter().map(|s| s.to_string()).collect(), cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_fixtures() {
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(AnalyticsError::ZeroVariance));
        assert_eq!(pearson_r(&[1.0, 2.0], &[1.0, 2.0, 3.0]), Err(AnalyticsError::LengthMismatch(2, 3)));
        assert!(pearson_r(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn star_fixtures() {
        let p = t_test_p_value(0.9, 5).unwrap();
        assert!((p - 0.0374).abs() < 5e-4, "{p}");
        assert_eq!(significance_stars(0.9, 5).unwrap(), Stars::One);
        assert_eq!(t_test_p_value(0.0, 40).unwrap(), 1.0);
        assert_eq!(significance_stars(0.0, 40).unwrap(), Stars::None);
        assert_eq!(significance_stars(0.99, 100).unwrap(), Stars::Three);
        assert_eq!(significance_stars(1.0, 10).unwrap(), Stars::Three);
        assert_eq!(significance_stars(-1.0, 10).unwrap(), Stars::Three);
    }

    #[test]
    fn matrix_diagonal_and_identical_columns() {
        let a: Vec<Option<f64>> = (0..40).map(|i| Some((i * 37 % 11) as f64)).collect();
        let m = correlation_matrix(vec!["a".into(), "b".into()], &[a.clone(), a]);
        assert_eq!(m.get("a", "a"), Some((1.0, Stars::Three)));
        let (r, s) = m.get("a", "b").unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(s, Stars::Three);
    }

    #[test]
    fn constant_column_is_absent() {
        let a: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        let c = vec![Some(3.0); 10];
        let m = correlation_matrix(vec!["a".into(), "c".into()], &[a, c]);
        assert_eq!(m.r[0][1], None);
        assert_eq!(m.r[1][1], None);
        assert_eq!(m.absent_variables(), vec!["c"]);
    }

    #[test]
    fn pairwise_complete_counts() {
        let a = vec![Some(1.0), Some(2.0), None, Some(4.0), Some(5.0)];
        let b = vec![Some(2.0), None, Some(1.0), Some(3.0), Some(9.0)];
        let m = correlation_matrix(vec!["a".into(), "b".into()], &[a, b]);
        assert_eq!(m.n[0][1], 3);
        assert_eq!(m.n[0][0], 4);
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            xs in prop::collection::vec(-100.0f64..100.0, 3..50),
            noise in prop::collection::vec(-10.0f64..10.0, 50),
            scale in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
            shift in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.3 * x + e).collect();
            if let Ok(r) = pearson_r(&xs, &ys) {
                prop_assert!(r.abs() <= 1.0 + 1e-12);
                prop_assert!((r - pearson_r(&ys, &xs).unwrap()).abs() < 1e-12);
                let scaled: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
                let r2 = pearson_r(&scaled, &ys).unwrap();
                prop_assert!((r2 - scale.signum() * r).abs() < 1e-9);
            }
        }
    }
}
