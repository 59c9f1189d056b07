use serde::{Deserialize, Serialize};

use super::model::ForestModel;
use super::tree::TreeNode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_impurity_decrease: f64,
    pub node_count: usize,
}

/// Per-feature importances, in the model's feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Descending by mean impurity decrease; ties keep feature order.
    pub fn ranked_by_decrease(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<_> = self.features.iter().collect();
        v.sort_by(|a, b| b.mean_impurity_decrease.total_cmp(&a.mean_impurity_decrease));
        v
    }

    pub fn ranked_by_node_count(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<_> = self.features.iter().collect();
        v.sort_by(|a, b| b.node_count.cmp(&a.node_count));
        v
    }

    /// Scales decreases to sum to one (no-op when all are zero).
    pub fn normalized(&self) -> ImportanceReport {
        let total: f64 = self.features.iter().map(|f| f.mean_impurity_decrease).sum();
        let mut out = self.clone();
        if total > 0.0 {
            for f in &mut out.features {
                f.mean_impurity_decrease /= total;
            }
        }
        out
    }
}

/// Mean decrease in impurity and split counts per feature.
///
/// Each internal node contributes `(n_node / n_root) * decrease` to its
/// feature; the sums are averaged over all trees.
pub fn feature_importance(model: &ForestModel) -> ImportanceReport {
    let p = model.feature_names.len();
    let mut score = vec![0.0f64; p];
    let mut count = vec![0usize; p];
    for tree in &model.trees {
        let n_root = tree.n() as f64;
        tree.for_each_internal(&mut |node| {
            if let TreeNode::Internal { feature, n, decrease, .. } = node {
                score[*feature] += (*n as f64 / n_root) * decrease;
                count[*feature] += 1;
            }
        });
    }
    let n_trees = model.trees.len().max(1) as f64;
    ImportanceReport {
        features: model
            .feature_names
            .iter()
            .enumerate()
            .map(|(i, name)| FeatureImportance {
                feature: name.clone(),
                mean_impurity_decrease: score[i] / n_trees,
                node_count: count[i],
            })
            .collect(),
    }
}
