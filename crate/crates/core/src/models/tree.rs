//! Decision-tree building blocks shared by the tree, forest, boosting, and
//! bagging families, plus the importance ranking used in feature selection.
//!
//! Splits are axis-aligned with `left = x <= threshold`. The exhaustive
//! strategy scans midpoints between consecutive distinct values (CART); the
//! randomized strategy draws one uniform threshold per candidate feature and
//! keeps the best, which is the extremely-randomized-trees construction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Candidate-threshold strategy per feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitStrategy {
    /// CART: best midpoint between consecutive distinct values.
    Exhaustive,
    /// One uniform threshold in `[min, max)` per candidate feature.
    RandomThreshold,
}

/// Tree-growing parameters.
#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
    pub strategy: SplitStrategy,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            strategy: SplitStrategy::Exhaustive,
        }
    }
}

/// `sqrt(d)` rounded, at least 1.
pub fn sqrt_features(d: usize) -> usize {
    ((d as f64).sqrt().round() as usize).clamp(1, d)
}

/// `log2(d)` rounded, at least 1.
pub fn log2_features(d: usize) -> usize {
    ((d as f64).log2().round() as usize).clamp(1, d)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Weighted class counts `[w0, w1]`.
        counts: [f64; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        match self {
            TreeNode::Leaf { counts } => {
                let total = counts[0] + counts[1];
                if total > 0.0 {
                    [counts[0] / total, counts[1] / total]
                } else {
                    [0.5, 0.5]
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.proba(row)
                } else {
                    right.proba(row)
                }
            }
        }
    }

    fn depth_below(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth_below().max(right.depth_below()),
        }
    }
}

/// One fitted classification tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationTree {
    pub root: TreeNode,
    pub n_features: usize,
}

impl ClassificationTree {
    pub fn proba(&self, row: &[f64]) -> [f64; 2] {
        self.root.proba(row)
    }

    pub fn depth(&self) -> usize {
        self.root.depth_below()
    }

    /// Grow a tree on the given rows.
    ///
    /// `weights` default to 1. When `importances` is provided it accumulates
    /// the weighted Gini decrease per split feature (un-normalized).
    pub fn fit(
        x: &Matrix,
        y: &[u8],
        weights: Option<&[f64]>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
        mut importances: Option<&mut [f64]>,
    ) -> Self {
        let n = x.n_rows();
        let owned_weights;
        let w = match weights {
            Some(w) => w,
            None => {
                owned_weights = vec![1.0; n];
                &owned_weights
            }
        };
        let mut indices: Vec<usize> = (0..n).collect();
        let total_weight: f64 = w.iter().sum();
        let mut builder = Builder {
            x,
            y,
            w,
            params,
            rng,
            total_weight,
            importances: importances.as_deref_mut(),
        };
        let root = builder.build(&mut indices, 0);
        Self {
            root,
            n_features: x.n_cols(),
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    w: &'a [f64],
    params: &'a TreeParams,
    rng: &'a mut ChaCha8Rng,
    total_weight: f64,
    importances: Option<&'a mut [f64]>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn gini(counts: [f64; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = counts[0] / total;
    let p1 = counts[1] / total;
    1.0 - p0 * p0 - p1 * p1
}

impl Builder<'_> {
    fn class_counts(&self, indices: &[usize]) -> [f64; 2] {
        let mut counts = [0.0; 2];
        for &i in indices {
            counts[self.y[i] as usize] += self.w[i];
        }
        counts
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        match self.params.max_features {
            None => (0..d).collect(),
            Some(m) if m >= d => (0..d).collect(),
            Some(m) => {
                // Partial Fisher-Yates draw of m distinct features.
                let mut pool: Vec<usize> = (0..d).collect();
                for i in 0..m {
                    let j = self.rng.gen_range(i..d);
                    pool.swap(i, j);
                }
                pool.truncate(m);
                pool
            }
        }
    }

    fn best_split(&mut self, indices: &[usize], parent_counts: [f64; 2]) -> Option<BestSplit> {
        let parent_weight = parent_counts[0] + parent_counts[1];
        let parent_gini = gini(parent_counts);
        let mut best: Option<BestSplit> = None;

        for feature in self.candidate_features() {
            match self.params.strategy {
                SplitStrategy::Exhaustive => {
                    let mut order: Vec<(f64, usize)> = indices
                        .iter()
                        .map(|&i| (self.x.get(i, feature), i))
                        .collect();
                    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    let mut left = [0.0; 2];
                    for k in 0..order.len() - 1 {
                        let (value, i) = order[k];
                        left[self.y[i] as usize] += self.w[i];
                        let next = order[k + 1].0;
                        if next <= value {
                            continue;
                        }
                        let right = [parent_counts[0] - left[0], parent_counts[1] - left[1]];
                        let wl = left[0] + left[1];
                        let wr = right[0] + right[1];
                        let gain = parent_gini
                            - (wl / parent_weight) * gini(left)
                            - (wr / parent_weight) * gini(right);
                        if best.as_ref().is_none_or(|b| gain > b.gain) {
                            best = Some(BestSplit {
                                feature,
                                threshold: 0.5 * (value + next),
                                gain,
                            });
                        }
                    }
                }
                SplitStrategy::RandomThreshold => {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for &i in indices {
                        let v = self.x.get(i, feature);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    if !(hi > lo) {
                        continue;
                    }
                    let threshold = self.rng.gen_range(lo..hi);
                    let mut left = [0.0; 2];
                    for &i in indices {
                        if self.x.get(i, feature) <= threshold {
                            left[self.y[i] as usize] += self.w[i];
                        }
                    }
                    let right = [parent_counts[0] - left[0], parent_counts[1] - left[1]];
                    let wl = left[0] + left[1];
                    let wr = right[0] + right[1];
                    if wl <= 0.0 || wr <= 0.0 {
                        continue;
                    }
                    let gain = parent_gini
                        - (wl / parent_weight) * gini(left)
                        - (wr / parent_weight) * gini(right);
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(BestSplit {
                            feature,
                            threshold,
                            gain,
                        });
                    }
                }
            }
        }
        best
    }

    fn build(&mut self, indices: &mut [usize], depth: usize) -> TreeNode {
        let counts = self.class_counts(indices);
        let leaf = TreeNode::Leaf { counts };
        if indices.len() < self.params.min_samples_split
            || counts[0] == 0.0
            || counts[1] == 0.0
            || self.params.max_depth.is_some_and(|d| depth >= d)
        {
            return leaf;
        }
        let Some(split) = self.best_split(indices, counts) else {
            return leaf;
        };
        if split.gain <= 1e-12 {
            return leaf;
        }

        if let Some(imp) = self.importances.as_deref_mut() {
            let node_weight = counts[0] + counts[1];
            imp[split.feature] += split.gain * node_weight / self.total_weight;
        }

        // Partition in place: left block first.
        let mut mid = 0;
        for k in 0..indices.len() {
            if self.x.get(indices[k], split.feature) <= split.threshold {
                indices.swap(mid, k);
                mid += 1;
            }
        }
        if mid == 0 || mid == indices.len() {
            return leaf;
        }
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Regression tree for boosting: squared-error splits, caller-supplied leaf
/// values (e.g. a Newton step over the node's rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RegNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
}

impl RegNode {
    pub fn value(&self, row: &[f64]) -> f64 {
        match self {
            RegNode::Leaf { value } => *value,
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.value(row)
                } else {
                    right.value(row)
                }
            }
        }
    }
}

pub struct RegTreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

/// Fit a regression tree to `targets`; every leaf value comes from
/// `leaf_value(rows_in_leaf)`.
pub fn fit_regression_tree(
    x: &Matrix,
    targets: &[f64],
    params: &RegTreeParams,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> RegNode {
    let mut indices: Vec<usize> = (0..x.n_rows()).collect();
    build_reg(x, targets, &mut indices, 0, params, leaf_value)
}

fn build_reg(
    x: &Matrix,
    targets: &[f64],
    indices: &mut [usize],
    depth: usize,
    params: &RegTreeParams,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> RegNode {
    if indices.len() < params.min_samples_split || depth >= params.max_depth {
        return RegNode::Leaf {
            value: leaf_value(indices),
        };
    }

    let n = indices.len() as f64;
    let sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    let sq_sum: f64 = indices.iter().map(|&i| targets[i] * targets[i]).sum();
    let parent_sse = sq_sum - sum * sum / n;

    let mut best: Option<(usize, f64, f64)> = None; // feature, threshold, sse
    for feature in 0..x.n_cols() {
        let mut order: Vec<(f64, f64)> = indices
            .iter()
            .map(|&i| (x.get(i, feature), targets[i]))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..order.len() - 1 {
            let (value, t) = order[k];
            left_sum += t;
            left_sq += t * t;
            let next = order[k + 1].0;
            if next <= value {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let right_sum = sum - left_sum;
            let right_sq = sq_sum - left_sq;
            let sse =
                (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            if best.is_none_or(|b| sse < b.2) {
                best = Some((feature, 0.5 * (value + next), sse));
            }
        }
    }

    let Some((feature, threshold, sse)) = best else {
        return RegNode::Leaf {
            value: leaf_value(indices),
        };
    };
    if parent_sse - sse <= 1e-12 {
        return RegNode::Leaf {
            value: leaf_value(indices),
        };
    }

    let mut mid = 0;
    for k in 0..indices.len() {
        if x.get(indices[k], feature) <= threshold {
            indices.swap(mid, k);
            mid += 1;
        }
    }
    if mid == 0 || mid == indices.len() {
        return RegNode::Leaf {
            value: leaf_value(indices),
        };
    }
    let (left_idx, right_idx) = indices.split_at_mut(mid);
    let left = build_reg(x, targets, left_idx, depth + 1, params, leaf_value);
    let right = build_reg(x, targets, right_idx, depth + 1, params, leaf_value);
    RegNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn xor_data(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a = rng.gen_range(0..2);
            let b = rng.gen_range(0..2);
            let row = vec![
                a as f64 + 0.1 * rng_jitter(&mut rng),
                b as f64 + 0.1 * rng_jitter(&mut rng),
            ];
            rows.push(row);
            labels.push((a ^ b) as u8);
        }
        (Matrix::from_rows(&rows), labels)
    }

    fn rng_jitter(rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-1.0..1.0)
    }

    #[test]
    fn fits_xor_within_depth_five() {
        // XOR needs two levels to express; greedy Gini may burn a level or
        // two on near-zero-gain splits first, so the budget matches the
        // depth-5 configuration that is actually shipped.
        let (x, y) = xor_data(200, 3);
        let params = TreeParams {
            max_depth: Some(5),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = ClassificationTree::fit(&x, &y, None, &params, &mut rng, None);
        let correct = (0..x.n_rows())
            .filter(|&i| {
                let p = tree.proba(x.row(i));
                (p[1] > 0.5) as u8 == y[i]
            })
            .count();
        assert!(correct as f64 / x.n_rows() as f64 >= 0.95);
    }

    #[test]
    fn pure_node_stops_growing() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let y = vec![1, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = ClassificationTree::fit(&x, &y, None, &TreeParams::default(), &mut rng, None);
        assert_eq!(tree.depth(), 0);
    }

    #[test]
    fn importance_concentrates_on_informative_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..300 {
            let label = rng.gen_range(0..2u8);
            rows.push(vec![
                label as f64 + 0.05 * rng_jitter(&mut rng),
                rng_jitter(&mut rng),
                rng_jitter(&mut rng),
            ]);
            labels.push(label);
        }
        let x = Matrix::from_rows(&rows);
        let mut importances = vec![0.0; 3];
        let mut tree_rng = ChaCha8Rng::seed_from_u64(1);
        ClassificationTree::fit(
            &x,
            &labels,
            None,
            &TreeParams::default(),
            &mut tree_rng,
            Some(&mut importances),
        );
        assert!(importances[0] > importances[1]);
        assert!(importances[0] > importances[2]);
    }

    #[test]
    fn regression_tree_fits_step() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>());
        let targets: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 } else { 2.0 }).collect();
        let params = RegTreeParams {
            max_depth: 3,
            min_samples_split: 2,
        };
        let mean = |idx: &[usize]| -> f64 {
            idx.iter().map(|&i| targets[i]).sum::<f64>() / idx.len() as f64
        };
        let tree = fit_regression_tree(&x, &targets, &params, &mean);
        assert_eq!(tree.value(&[3.0]), -1.0);
        assert_eq!(tree.value(&[15.0]), 2.0);
    }
}
