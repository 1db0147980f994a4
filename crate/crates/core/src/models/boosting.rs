//! Gradient boosting on logistic loss and AdaBoost (SAMME) over stumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

use super::tree::{
    fit_regression_tree, ClassificationTree, RegNode, RegTreeParams, SplitStrategy, TreeParams,
};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient-boosted depth-3 regression trees on the logistic loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbModel {
    pub init_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegNode>,
    pub n_features: usize,
}

pub fn fit_gb(x: &Matrix, y: &[u8], n_estimators: usize, learning_rate: f64) -> GbModel {
    let n = x.n_rows();
    let p_prior = (y.iter().filter(|&&t| t == 1).count() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let init_score = (p_prior / (1.0 - p_prior)).ln();
    let mut scores = vec![init_score; n];
    let params = RegTreeParams {
        max_depth: 3,
        min_samples_split: 2,
    };

    let mut trees = Vec::with_capacity(n_estimators);
    for _ in 0..n_estimators {
        let probs: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        let residuals: Vec<f64> = (0..n).map(|i| y[i] as f64 - probs[i]).collect();
        // Newton leaf value: sum(residual) / sum(p (1 - p)).
        let leaf_value = |idx: &[usize]| -> f64 {
            let num: f64 = idx.iter().map(|&i| residuals[i]).sum();
            let den: f64 = idx.iter().map(|&i| probs[i] * (1.0 - probs[i])).sum();
            num / den.max(1e-12)
        };
        let tree = fit_regression_tree(x, &residuals, &params, &leaf_value);
        for i in 0..n {
            scores[i] += learning_rate * tree.value(x.row(i));
        }
        trees.push(tree);
    }
    GbModel {
        init_score,
        learning_rate,
        trees,
        n_features: x.n_cols(),
    }
}

impl GbModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut score = self.init_score;
        for tree in &self.trees {
            score += self.learning_rate * tree.value(row);
        }
        score
    }

    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        let p = sigmoid(self.decision(row));
        [1.0 - p, p]
    }
}

/// AdaBoost with depth-1 stumps (SAMME, two classes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaModel {
    pub stumps: Vec<(ClassificationTree, f64)>,
    /// Training prior for the degenerate no-stump case.
    pub prior_p1: f64,
    pub n_features: usize,
}

pub fn fit_ada(
    x: &Matrix,
    y: &[u8],
    n_estimators: usize,
    learning_rate: f64,
    seed: u64,
) -> AdaModel {
    let n = x.n_rows();
    let mut weights = vec![1.0 / n as f64; n];
    let params = TreeParams {
        max_depth: Some(1),
        min_samples_split: 2,
        max_features: None,
        strategy: SplitStrategy::Exhaustive,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stumps = Vec::new();

    for _ in 0..n_estimators {
        let stump = ClassificationTree::fit(x, y, Some(&weights), &params, &mut rng, None);
        let predictions: Vec<u8> = (0..n)
            .map(|i| (stump.proba(x.row(i))[1] > 0.5) as u8)
            .collect();
        let err: f64 = (0..n)
            .filter(|&i| predictions[i] != y[i])
            .map(|i| weights[i])
            .sum();
        if err >= 0.5 {
            break;
        }
        if err <= 1e-12 {
            // Perfect stump: cap its vote and stop.
            stumps.push((stump, learning_rate * (1e12f64).ln()));
            break;
        }
        let alpha = learning_rate * ((1.0 - err) / err).ln();
        for i in 0..n {
            if predictions[i] != y[i] {
                weights[i] *= alpha.exp();
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        stumps.push((stump, alpha));
    }

    AdaModel {
        stumps,
        prior_p1: y.iter().filter(|&&t| t == 1).count() as f64 / n as f64,
        n_features: x.n_cols(),
    }
}

impl AdaModel {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        if self.stumps.is_empty() {
            return [1.0 - self.prior_p1, self.prior_p1];
        }
        let mut votes = [0.0; 2];
        let mut total = 0.0;
        for (stump, alpha) in &self.stumps {
            let k = (stump.proba(row)[1] > 0.5) as usize;
            votes[k] += alpha;
            total += alpha;
        }
        // Normalized vote margin through a logistic link keeps the argmax at
        // the weighted majority while producing calibrated-looking rows.
        let margin = (votes[1] - votes[0]) / total.max(1e-12);
        let p1 = sigmoid(2.0 * margin);
        [1.0 - p1, p1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_blobs;

    fn accuracy<F: Fn(&[f64]) -> [f64; 2]>(x: &Matrix, y: &[u8], proba: F) -> f64 {
        (0..x.n_rows())
            .filter(|&i| (proba(x.row(i))[1] > 0.5) as u8 == y[i])
            .count() as f64
            / x.n_rows() as f64
    }

    #[test]
    fn gb_separates_blobs() {
        let (x, y) = gaussian_blobs(150, 2, 3.0, 1.0, 6);
        let model = fit_gb(&x, &y, 100, 0.1);
        assert!(accuracy(&x, &y, |r| model.proba(r)) >= 0.99);
    }

    #[test]
    fn gb_probability_tracks_depth_into_class() {
        let (x, y) = gaussian_blobs(200, 1, 3.0, 1.0, 7);
        let model = fit_gb(&x, &y, 50, 0.1);
        let deep1 = model.proba(&[2.5])[1];
        let deep0 = model.proba(&[-2.5])[1];
        assert!(deep1 > 0.9 && deep0 < 0.1);
    }

    #[test]
    fn ada_boosts_past_a_single_stump() {
        // Diagonal boundary: one axis-aligned stump is weak, a boosted
        // committee is not.
        let (x, y) = gaussian_blobs(200, 2, 2.0, 0.8, 8);
        let model = fit_ada(&x, &y, 100, 0.5, 3);
        assert!(accuracy(&x, &y, |r| model.proba(r)) >= 0.95);
        assert!(model.stumps.len() > 5);
    }

    #[test]
    fn ada_rows_sum_to_one() {
        let (x, y) = gaussian_blobs(50, 2, 2.0, 1.0, 9);
        let model = fit_ada(&x, &y, 20, 0.5, 1);
        for i in 0..x.n_rows() {
            let p = model.proba(x.row(i));
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }
}
