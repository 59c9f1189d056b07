use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, cohens_kappa};
use super::model::{train_forest, Hyperparams, Scope};
use super::{mix_seed, Dataset, ForestError, Target};

const FOLD_SALT: u64 = 0xF01D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub accuracy: f64,
    pub kappa: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub target: Target,
    pub scope: Scope,
    pub k: usize,
    /// False when some class had fewer than `k` members and folds were
    /// assigned without stratification.
    pub stratified: bool,
    pub accuracy: f64,
    pub kappa: f64,
    pub class_set: Vec<u8>,
    /// Summed over folds; rows are truth, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub per_fold: Vec<FoldScore>,
}

/// Assigns each row to one of `k` folds.
///
/// Rows of each class are shuffled and dealt round-robin, continuing the
/// deal across classes, so fold sizes differ by at most one. Falls back to a
/// plain shuffled deal when a present class has fewer than `k` members.
/// Returns the fold of every row and whether stratification was used.
pub fn fold_assignment(classes: &[usize], n_classes: usize, k: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, FOLD_SALT));
    let mut by_class = vec![Vec::new(); n_classes];
    for (row, &c) in classes.iter().enumerate() {
        by_class[c].push(row);
    }
    let stratified = by_class.iter().all(|m| m.is_empty() || m.len() >= k);
    let groups = if stratified {
        by_class
    } else {
        vec![(0..classes.len()).collect()]
    };
    let mut folds = vec![0usize; classes.len()];
    let mut next = 0usize;
    for mut members in groups {
        members.shuffle(&mut rng);
        for row in members {
            folds[row] = next % k;
            next += 1;
        }
    }
    (folds, stratified)
}

/// k-fold cross-validation of a forest on `data`.
pub fn cross_validate(
    data: &Dataset,
    target: Target,
    scope: Scope,
    hyperparams: &Hyperparams,
    k: usize,
) -> Result<EvaluationReport, ForestError> {
    let n = data.len();
    if k < 2 || k > n {
        return Err(ForestError::InvalidFolds { k, n });
    }
    let n_classes = data.n_classes();
    let (folds, stratified) = fold_assignment(data.classes(), n_classes, k, hyperparams.seed);

    let fold_confusions = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..n).filter(|&r| folds[r] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&r| folds[r] == fold).collect();
            let hp = Hyperparams {
                seed: mix_seed(hyperparams.seed, fold as u64 + 1),
                ..*hyperparams
            };
            let model = train_forest(&data.subset(&train), target, scope.clone(), &hp)?;
            let mut confusion = vec![vec![0u64; n_classes]; n_classes];
            for &r in &test {
                let predicted = model.predict_class(data.row(r))?;
                confusion[data.class(r)][predicted] += 1;
            }
            Ok(confusion)
        })
        .collect::<Result<Vec<_>, ForestError>>()?;

    let mut total = vec![vec![0u64; n_classes]; n_classes];
    let mut per_fold = Vec::with_capacity(k);
    for c in &fold_confusions {
        for (i, row) in c.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                total[i][j] += v;
            }
        }
        per_fold.push(FoldScore {
            accuracy: accuracy(c)?,
            kappa: cohens_kappa(c)?,
            n: c.iter().flatten().sum::<u64>() as usize,
        });
    }
    Ok(EvaluationReport {
        target,
        scope,
        k,
        stratified,
        accuracy: accuracy(&total)?,
        kappa: cohens_kappa(&total)?,
        class_set: data.class_set().to_vec(),
        confusion: total,
        per_fold,
    })
}
