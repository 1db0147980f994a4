//! Tree ensembles: random forest, extremely randomized trees, and bagging.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rngutil::derive_seed;

use super::tree::{ClassificationTree, SplitStrategy, TreeParams};

/// Forest of classification trees averaged by class probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<ClassificationTree>,
    pub n_features: usize,
}

impl ForestModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for tree in &self.trees {
            let p = tree.proba(row);
            acc[0] += p[0];
            acc[1] += p[1];
        }
        let n = self.trees.len() as f64;
        [acc[0] / n, acc[1] / n]
    }
}

/// Random forest: bootstrap rows, `sqrt(d)` features per split, CART splits.
pub fn fit_random_forest(
    x: &Matrix,
    y: &[u8],
    n_trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> ForestModel {
    let n = x.n_rows();
    let params = TreeParams {
        max_depth,
        min_samples_split: 2,
        max_features: Some(super::tree::sqrt_features(x.n_cols())),
        strategy: SplitStrategy::Exhaustive,
    };
    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            // Bootstrap as per-row weights so the tree still sees every row
            // boundary it needs for thresholds it was drawn for.
            let mut weights = vec![0.0; n];
            for _ in 0..n {
                weights[rng.gen_range(0..n)] += 1.0;
            }
            let drawn: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
            let xb = x.select_rows(&drawn);
            let yb: Vec<u8> = drawn.iter().map(|&i| y[i]).collect();
            let wb: Vec<f64> = drawn.iter().map(|&i| weights[i]).collect();
            ClassificationTree::fit(&xb, &yb, Some(&wb), &params, &mut rng, None)
        })
        .collect();
    ForestModel {
        trees,
        n_features: x.n_cols(),
    }
}

/// Extremely randomized trees: full data per tree (no bootstrap), random
/// split thresholds, configurable feature count per split. When
/// `importances` is given it receives the mean of per-tree normalized Gini
/// importances.
pub fn fit_extra_trees(
    x: &Matrix,
    y: &[u8],
    n_trees: usize,
    max_features: usize,
    seed: u64,
    mut importances: Option<&mut Vec<f64>>,
) -> ForestModel {
    let d = x.n_cols();
    let params = TreeParams {
        max_depth: None,
        min_samples_split: 2,
        max_features: Some(max_features.clamp(1, d)),
        strategy: SplitStrategy::RandomThreshold,
    };
    if let Some(imp) = importances.as_deref_mut() {
        imp.clear();
        imp.resize(d, 0.0);
    }
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
        let mut tree_imp = vec![0.0; d];
        let tree = ClassificationTree::fit(x, y, None, &params, &mut rng, Some(&mut tree_imp));
        if let Some(imp) = importances.as_deref_mut() {
            let total: f64 = tree_imp.iter().sum();
            if total > 0.0 {
                for (a, b) in imp.iter_mut().zip(&tree_imp) {
                    *a += b / total / n_trees as f64;
                }
            }
        }
        trees.push(tree);
    }
    if let Some(imp) = importances {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for v in imp.iter_mut() {
                *v /= total;
            }
        } else {
            // No tree found a usable split; fall back to uniform.
            imp.iter_mut().for_each(|v| *v = 1.0 / d as f64);
        }
    }
    ForestModel {
        trees,
        n_features: d,
    }
}

/// Bagging over full-depth CART trees with row and feature subsampling.
/// Each member stores its feature mask; probabilities are member averages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaggingModel {
    pub members: Vec<(Vec<usize>, ClassificationTree)>,
    pub n_features: usize,
}

impl BaggingModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut acc = [0.0; 2];
        let mut sub = Vec::new();
        for (mask, tree) in &self.members {
            sub.clear();
            sub.extend(mask.iter().map(|&j| row[j]));
            let p = tree.proba(&sub);
            acc[0] += p[0];
            acc[1] += p[1];
        }
        let n = self.members.len() as f64;
        [acc[0] / n, acc[1] / n]
    }
}

pub fn fit_bagging(
    x: &Matrix,
    y: &[u8],
    n_estimators: usize,
    sample_ratio: f64,
    feature_ratio: f64,
    seed: u64,
) -> BaggingModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let n_draw = ((n as f64 * sample_ratio).round() as usize).clamp(1, n);
    let d_draw = ((d as f64 * feature_ratio).round() as usize).clamp(1, d);
    let params = TreeParams::default();

    let members = (0..n_estimators)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            // Rows with replacement.
            let rows: Vec<usize> = (0..n_draw).map(|_| rng.gen_range(0..n)).collect();
            // Features without replacement, kept in index order.
            let mut pool: Vec<usize> = (0..d).collect();
            for i in 0..d_draw {
                let j = rng.gen_range(i..d);
                pool.swap(i, j);
            }
            let mut mask: Vec<usize> = pool[..d_draw].to_vec();
            mask.sort_unstable();

            let xs = x.select_rows(&rows).select_columns(&mask);
            let ys: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
            let tree = ClassificationTree::fit(&xs, &ys, None, &params, &mut rng, None);
            (mask, tree)
        })
        .collect();
    BaggingModel {
        members,
        n_features: d,
    }
}
