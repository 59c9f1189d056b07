//! Random forest classifier built from Gini decision trees, plus the
//! cross-validation and feature-importance procedures used to evaluate it.

mod cv;
mod dataset;
mod importance;
mod metrics;
mod model;
mod tree;

pub use cv::{cross_validate, fold_assignment, EvaluationReport, FoldScore};
pub use dataset::{Dataset, Target};
pub use importance::{feature_importance, FeatureImportance, ImportanceReport};
pub use metrics::{accuracy, cohens_kappa, MetricError};
pub use model::{train_forest, ForestModel, Hyperparams, Prediction, Scope, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{best_split, gini, train_tree, Split, TreeNode};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("expected {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("invalid fold count {k} for {n} examples")]
    InvalidFolds { k: usize, n: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("model format: {0}")]
    Format(String),
}

/// SplitMix64 finalizer, used to derive independent seeds from a base seed.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
