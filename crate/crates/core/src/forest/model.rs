use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{argmax_lowest, train_tree, TreeNode};
use super::{Dataset, ForestError, Target};
use crate::domain::UserId;

pub const MODEL_FORMAT: &str = "happimeter-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            n_trees: 100,
            min_leaf: 50,
            features_per_split: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    General,
    Individual(UserId),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::General => f.write_str("general"),
            Scope::Individual(u) => write!(f, "individual:{u}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub target: Target,
    pub scope: Scope,
    pub feature_names: Vec<String>,
    pub class_set: Vec<u8>,
    pub hyperparams: Hyperparams,
    pub trees: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    /// Vote share per label; labels without votes are omitted.
    pub distribution: BTreeMap<u8, f64>,
}

/// Independent rng for tree `index`: ChaCha stream `index` under `seed`, so the
/// result doesn't depend on which thread trains which tree.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Trains `n_trees` trees on bootstrap resamples of `data`.
///
/// Runs on the current rayon pool; wrap in `ThreadPool::install` to pin the
/// degree of parallelism. Output is identical for any pool size.
pub fn train_forest(
    data: &Dataset,
    target: Target,
    scope: Scope,
    hyperparams: &Hyperparams,
) -> Result<ForestModel, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyDataset(format!("no examples for {scope}")));
    }
    if hyperparams.n_trees == 0 {
        return Err(ForestError::Contract("n_trees must be at least 1".into()));
    }
    let n = data.len();
    let trees = (0..hyperparams.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(hyperparams.seed, i);
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            train_tree(
                data,
                &sample,
                hyperparams.min_leaf,
                hyperparams.features_per_split,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        target,
        scope,
        feature_names: data.feature_names().to_vec(),
        class_set: data.class_set().to_vec(),
        hyperparams: *hyperparams,
        trees,
    })
}

impl ForestModel {
    /// Per-tree votes aggregated by class index.
    fn votes(&self, row: &[f64]) -> Result<Vec<usize>, ForestError> {
        if row.len() != self.feature_names.len() {
            return Err(ForestError::FeatureMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        let mut votes = vec![0usize; self.class_set.len()];
        for tree in &self.trees {
            votes[tree.vote(row)] += 1;
        }
        Ok(votes)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction, ForestError> {
        let votes = self.votes(row)?;
        let total = votes.iter().sum::<usize>() as f64;
        let distribution = votes
            .iter()
            .zip(&self.class_set)
            .filter(|(v, _)| **v > 0)
            .map(|(v, label)| (*label, *v as f64 / total))
            .collect();
        Ok(Prediction {
            label: self.class_set[argmax_lowest(&votes)],
            distribution,
        })
    }

    /// Class index of the plurality vote.
    pub fn predict_class(&self, row: &[f64]) -> Result<usize, ForestError> {
        Ok(argmax_lowest(&self.votes(row)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ForestError> {
        let model: ForestModel =
            serde_json::from_str(s).map_err(|e| ForestError::Format(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(ForestError::Format(format!("unexpected format `{}`", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(ForestError::Format(format!("unsupported version {}", model.version)));
        }
        if model.trees.is_empty() {
            return Err(ForestError::Format("model has no trees".into()));
        }
        Ok(model)
    }
}
