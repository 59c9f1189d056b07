use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ForestError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        /// Rows with `value <= threshold` go left.
        threshold: f64,
        /// Training rows reaching this node.
        n: usize,
        impurity: f64,
        /// Weighted Gini decrease achieved by this split.
        decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: Vec<usize>,
    },
}

impl TreeNode {
    pub fn n(&self) -> usize {
        match self {
            TreeNode::Internal { n, .. } => *n,
            TreeNode::Leaf { class_counts } => class_counts.iter().sum(),
        }
    }

    /// Leaf reached by `row`.
    pub fn leaf_counts(&self, row: &[f64]) -> &[usize] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
                TreeNode::Leaf { class_counts } => return class_counts,
            }
        }
    }

    /// Majority class index of the leaf reached by `row`; ties go to the lowest index.
    pub fn vote(&self, row: &[f64]) -> usize {
        argmax_lowest(self.leaf_counts(row))
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn for_each_internal(&self, f: &mut impl FnMut(&TreeNode)) {
        if let TreeNode::Internal { left, right, .. } = self {
            f(self);
            left.for_each_internal(f);
            right.for_each_internal(f);
        }
    }

    pub fn for_each_leaf(&self, f: &mut impl FnMut(&[usize])) {
        match self {
            TreeNode::Leaf { class_counts } => f(class_counts),
            TreeNode::Internal { left, right, .. } => {
                left.for_each_leaf(f);
                right.for_each_leaf(f);
            }
        }
    }
}

pub(crate) fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Gini impurity `1 - Σ p_i²` of a class histogram.
pub fn gini(class_counts: &[usize]) -> Result<f64, ForestError> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(ForestError::Contract("gini of an empty node".into()));
    }
    Ok(gini_unchecked(class_counts, total))
}

#[inline]
pub(crate) fn gini_unchecked(class_counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    1.0 - class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

/// Best Gini split of `rows` over `candidate_features`.
///
/// Thresholds are midpoints between consecutive distinct values; both sides
/// must keep at least `min_leaf` rows. Only splits with a positive decrease
/// qualify. Ties favour the lowest feature index, then the lowest threshold.
pub fn best_split(
    data: &Dataset,
    rows: &[usize],
    candidate_features: &[usize],
    min_leaf: usize,
) -> Result<Option<Split>, ForestError> {
    if rows.is_empty() {
        return Err(ForestError::Contract("best_split on an empty node".into()));
    }
    let n = rows.len();
    let k = data.n_classes();
    let mut parent = vec![0usize; k];
    for &r in rows {
        parent[data.class(r)] += 1;
    }
    let parent_impurity = gini_unchecked(&parent, n);
    let min_leaf = min_leaf.max(1);
    if parent_impurity <= 0.0 || n < 2 * min_leaf {
        return Ok(None);
    }

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    // Candidates are ranked exactly: maximizing the decrease is maximizing
    // sq_left / n_left + sq_right / n_right, where sq is the sum of squared
    // class counts. Kept as a fraction (numerator, denominator).
    let sq_parent: u128 = parent.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let above_parent = |num: u128, den: u128| num * n as u128 > sq_parent * den;
    let mut best: Option<(Split, u128, u128)> = None;
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; k];
    let mut right = vec![0usize; k];
    for &f in &features {
        column.clear();
        column.extend(rows.iter().map(|&r| (data.value(r, f), data.class(r))));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        let mut sq_left: u128 = 0;
        let mut sq_right = sq_parent;
        for i in 0..n - 1 {
            let (v, c) = column[i];
            sq_left += 2 * left[c] as u128 + 1;
            sq_right -= 2 * right[c] as u128 - 1;
            left[c] += 1;
            right[c] -= 1;
            let n_left = i + 1;
            if n_left < min_leaf {
                continue;
            }
            let n_right = n - n_left;
            if n_right < min_leaf {
                break;
            }
            let next = column[i + 1].0;
            if next <= v {
                continue;
            }
            let num = sq_left * n_right as u128 + sq_right * n_left as u128;
            let den = (n_left * n_right) as u128;
            if !above_parent(num, den) {
                continue;
            }
            if best.map_or(true, |(_, bn, bd)| num * bd > bn * den) {
                let decrease = parent_impurity
                    - (n_left as f64 / n as f64) * gini_unchecked(&left, n_left)
                    - (n_right as f64 / n as f64) * gini_unchecked(&right, n_right);
                best = Some((
                    Split {
                        feature: f,
                        threshold: midpoint(v, next),
                        decrease,
                    },
                    num,
                    den,
                ));
            }
        }
    }
    Ok(best.map(|b| b.0))
}

/// Midpoint that always lies in `[a, b)` for `a < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = (a + b) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Grows a tree greedily on `rows` (a bootstrap sample, duplicates allowed).
///
/// Each node draws `features_per_split` distinct candidate features from
/// `rng`; nodes are expanded depth-first, left before right, so the tree is
/// a pure function of the rng state.
pub fn train_tree<R: Rng>(
    data: &Dataset,
    rows: &[usize],
    min_leaf: usize,
    features_per_split: usize,
    rng: &mut R,
) -> Result<TreeNode, ForestError> {
    if rows.is_empty() {
        return Err(ForestError::Contract("train_tree on an empty sample".into()));
    }
    grow(data, rows, min_leaf, features_per_split, rng)
}

fn grow<R: Rng>(
    data: &Dataset,
    rows: &[usize],
    min_leaf: usize,
    features_per_split: usize,
    rng: &mut R,
) -> Result<TreeNode, ForestError> {
    let k = data.n_classes();
    let mut counts = vec![0usize; k];
    for &r in rows.iter() {
        counts[data.class(r)] += 1;
    }
    let impurity = gini_unchecked(&counts, rows.len());
    if impurity <= 0.0 || rows.len() < 2 * min_leaf.max(1) {
        return Ok(TreeNode::Leaf { class_counts: counts });
    }
    let p = data.n_features();
    let candidates: Vec<usize> = if features_per_split >= p {
        (0..p).collect()
    } else {
        let mut c = index::sample(rng, p, features_per_split.max(1)).into_vec();
        c.sort_unstable();
        c
    };
    let Some(split) = best_split(data, rows, &candidates, min_leaf)? else {
        return Ok(TreeNode::Leaf { class_counts: counts });
    };
    // stable partition keeps the row order (and thus the tree) deterministic
    let (lo, hi): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| data.value(r, split.feature) <= split.threshold);
    let n = rows.len();
    let left = grow(data, &lo, min_leaf, features_per_split, rng)?;
    let right = grow(data, &hi, min_leaf, features_per_split, rng)?;
    Ok(TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        n,
        impurity,
        decrease: split.decrease,
        left: Box::new(left),
        right: Box::new(right),
    })
}
