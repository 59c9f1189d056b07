use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::featurize::{LabeledExample, FEATURE_NAMES, N_FEATURES};

/// The label a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Pleasance,
    Activation,
    MoodState,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Pleasance, Target::Activation, Target::MoodState];

    /// Every label the target can take, ascending.
    pub fn class_set(self) -> Vec<u8> {
        match self {
            Target::Pleasance | Target::Activation => vec![0, 1, 2],
            Target::MoodState => (1..=9).collect(),
        }
    }

    pub fn label(self, ex: &LabeledExample) -> u8 {
        match self {
            Target::Pleasance => ex.pleasance.value(),
            Target::Activation => ex.activation.value(),
            Target::MoodState => ex.mood_state.code(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Pleasance => "pleasance",
            Target::Activation => "activation",
            Target::MoodState => "mood_state",
        }
    }

    pub fn parse(s: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// Dense row-major feature matrix with class-index labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<usize>,
    class_set: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// `labels` are raw label codes; each must appear in `class_set`.
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: &[u8],
        class_set: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, ForestError> {
        if rows.len() != labels.len() {
            return Err(ForestError::Contract(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let n_features = feature_names.len();
        let mut x = Vec::with_capacity(rows.len() * n_features);
        for row in &rows {
            if row.len() != n_features {
                return Err(ForestError::FeatureMismatch {
                    expected: n_features,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ForestError::Contract("non-finite feature value".into()));
            }
            x.extend_from_slice(row);
        }
        let y = labels
            .iter()
            .map(|l| {
                class_set
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| ForestError::Contract(format!("label {l} not in class set")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            n_features,
            x,
            y,
            class_set,
            feature_names,
        })
    }

    pub fn from_examples(examples: &[LabeledExample], target: Target) -> Self {
        let mut x = Vec::with_capacity(examples.len() * N_FEATURES);
        let mut y = Vec::with_capacity(examples.len());
        let class_set = target.class_set();
        for ex in examples {
            x.extend_from_slice(&ex.features.to_array());
            let label = target.label(ex);
            y.push(class_set.iter().position(|c| *c == label).expect("label in domain"));
        }
        Dataset {
            n_features: N_FEATURES,
            x,
            y,
            class_set,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_set.len()
    }

    pub fn class_set(&self) -> &[u8] {
        &self.class_set
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.x[row * self.n_features..(row + 1) * self.n_features]
    }

    /// Class index of a row.
    #[inline]
    pub fn class(&self, row: usize) -> usize {
        self.y[row]
    }

    pub fn classes(&self) -> &[usize] {
        &self.y
    }

    /// Copy of the selected rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.n_features);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            x.extend_from_slice(self.row(r));
            y.push(self.y[r]);
        }
        Dataset {
            n_features: self.n_features,
            x,
            y,
            class_set: self.class_set.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}
