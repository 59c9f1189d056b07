//! Descriptive statistics of the mood labels, hour-of-day profiles, the
//! Pearson correlation table with significance stars, and friend influence.

mod correlation;
mod descriptive;
mod influence;
pub mod special;

pub use correlation::{
    correlation_matrix, pearson_r, significance_stars, t_test_p_value, table3_columns,
    CorrelationMatrix, Stars, TABLE3_VARIABLES,
};
pub use descriptive::{descriptive_stats, hourly_profile, DescriptiveReport, HourStat, HourlyProfile, LevelStats};
pub use influence::{
    copresence_events, friend_influence, rank_influencers, CopresenceConfig, Direction, InfluenceScore,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("no observations")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
    #[error("|r| must be at most 1, got {0}")]
    InvalidCorrelation(f64),
}
