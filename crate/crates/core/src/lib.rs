//! Mood sensing from wearable data: the pleasance/activation grid, feature
//! extraction, random forests, descriptive and correlation analytics, prompt
//! scheduling and a synthetic cohort generator.

pub mod analytics;
pub mod domain;
pub mod featurize;
pub mod forest;
pub mod pipeline;
pub mod sampling;
pub mod sim;
