//! Feature normalization and the two-stage hybrid selection.
//!
//! Stage 1 ranks features by extremely-randomized-tree importance (500
//! estimators) and keeps the top 18; stage 2 keeps the top 13 of those by
//! one-way ANOVA F score. Both stages are fitted on (scaled) training rows
//! only; [`FittedSelector::transform`] then applies the frozen scaling and
//! column subset to any matrix. Ties rank the lower feature index first so
//! runs are reproducible.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::forest::fit_extra_trees;

/// Cap used in place of an infinite F statistic (zero within-group variance
/// with separated means).
pub const F_SCORE_CAP: f64 = 1e12;

/// Per-feature z-scoring with parameters learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl StandardScaler {
    /// Learn population mean/std per column; zero-variance columns store a
    /// std of 1 so their transform is a constant 0 instead of a division by
    /// zero.
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.n_rows() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: train.n_rows(),
            });
        }
        let n = train.n_rows() as f64;
        let d = train.n_cols();
        let mut means = vec![0.0; d];
        for i in 0..train.n_rows() {
            for (j, v) in train.row(i).iter().enumerate() {
                means[j] += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; d];
        for i in 0..train.n_rows() {
            for (j, v) in train.row(i).iter().enumerate() {
                let dev = v - means[j];
                stds[j] += dev * dev;
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(Self { means, stds })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.check_cols(self.means.len())?;
        let mut out = x.clone();
        for i in 0..out.n_rows() {
            let row = out.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        Ok(out)
    }
}

/// Which selection the pipeline applies after scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Scaling only; all features kept.
    None,
    /// Single-stage ANOVA-F filter.
    KBestOnly,
    /// Tree importance (keep 18) then ANOVA-F (keep 13).
    Hybrid,
}

impl std::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionMode::None => "none",
            SelectionMode::KBestOnly => "kbest",
            SelectionMode::Hybrid => "hybrid",
        })
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SelectionMode::None),
            "kbest" | "kbest_only" => Ok(SelectionMode::KBestOnly),
            "hybrid" => Ok(SelectionMode::Hybrid),
            other => Err(Error::InvalidConfig(format!(
                "unknown feature-selection mode `{other}`"
            ))),
        }
    }
}

/// Stage sizes; the defaults are the published configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionParams {
    pub stage1_keep: usize,
    pub stage2_k: usize,
    /// k for the single-stage filter ablation.
    pub kbest_k: usize,
    pub n_trees: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            stage1_keep: 18,
            stage2_k: 13,
            kbest_k: 13,
            n_trees: 500,
        }
    }
}

/// Fitted selection state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub mode: SelectionMode,
    pub stage1_keep: usize,
    pub stage2_k: usize,
    /// Kept features in ascending original-index order.
    pub selected_indices: Vec<usize>,
    /// Tree importances per feature (empty unless the mode computes them).
    pub importances: Vec<f64>,
    /// ANOVA F score per feature (empty for mode `none`).
    pub f_scores: Vec<f64>,
}

/// Mean decrease in Gini impurity across extremely randomized trees
/// (no bootstrap, random thresholds, `sqrt(d)` features per split).
/// Importances are non-negative and sum to 1.
pub fn extra_trees_importance(x: &Matrix, y: &[u8], n_trees: usize, seed: u64) -> Result<Vec<f64>> {
    check_two_classes(y)?;
    let mut importances = Vec::new();
    let d_try = crate::models::tree::sqrt_features(x.n_cols());
    fit_extra_trees(x, y, n_trees, d_try, seed, Some(&mut importances));
    Ok(importances)
}

fn check_two_classes(y: &[u8]) -> Result<()> {
    let n_pos = y.iter().filter(|&&t| t == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassTraining);
    }
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: n_pos.min(n_neg),
        });
    }
    Ok(())
}

/// One-way ANOVA F per feature for the two-class labels: between-group mean
/// square over within-group mean square with (1, n - 2) degrees of freedom.
/// A degenerate feature (zero within-group variance) scores 0 when the group
/// means agree and [`F_SCORE_CAP`] when they differ.
pub fn anova_f_scores(x: &Matrix, y: &[u8]) -> Result<Vec<f64>> {
    check_two_classes(y)?;
    let n = x.n_rows();
    let d = x.n_cols();
    let n1 = y.iter().filter(|&&t| t == 1).count() as f64;
    let n0 = n as f64 - n1;

    let mut scores = Vec::with_capacity(d);
    for j in 0..d {
        let mut sum = [0.0f64; 2];
        for i in 0..n {
            sum[y[i] as usize] += x.get(i, j);
        }
        let mean0 = sum[0] / n0;
        let mean1 = sum[1] / n1;
        let grand = (sum[0] + sum[1]) / n as f64;
        let ss_between =
            n0 * (mean0 - grand) * (mean0 - grand) + n1 * (mean1 - grand) * (mean1 - grand);
        let mut ss_within = 0.0;
        for i in 0..n {
            let mean = if y[i] == 1 { mean1 } else { mean0 };
            let dev = x.get(i, j) - mean;
            ss_within += dev * dev;
        }
        let df_within = (n - 2) as f64;
        let f = if ss_within <= 0.0 {
            if ss_between <= 0.0 {
                0.0
            } else {
                F_SCORE_CAP
            }
        } else {
            (ss_between / 1.0) / (ss_within / df_within)
        };
        scores.push(f.min(F_SCORE_CAP));
    }
    Ok(scores)
}

/// Indices of the `k` largest scores, ties broken toward the lower index;
/// result sorted ascending.
fn top_k(scores: &[f64], k: usize, within: Option<&[usize]>) -> Vec<usize> {
    let mut candidates: Vec<usize> = match within {
        Some(set) => set.to_vec(),
        None => (0..scores.len()).collect(),
    };
    candidates.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    candidates.truncate(k);
    candidates.sort_unstable();
    candidates
}

/// Two-stage hybrid fit on (scaled) training data.
pub fn fit_hybrid(
    x: &Matrix,
    y: &[u8],
    stage1_keep: usize,
    stage2_k: usize,
    n_trees: usize,
    seed: u64,
) -> Result<SelectionModel> {
    let d = x.n_cols();
    if d < stage1_keep || stage1_keep < stage2_k {
        return Err(Error::InsufficientFeatures {
            needed: stage1_keep.max(stage2_k),
            got: d,
        });
    }
    let importances = extra_trees_importance(x, y, n_trees, seed)?;
    let survivors = top_k(&importances, stage1_keep, None);
    let f_scores = anova_f_scores(x, y)?;
    let selected_indices = top_k(&f_scores, stage2_k.min(stage1_keep), Some(&survivors));
    Ok(SelectionModel {
        mode: SelectionMode::Hybrid,
        stage1_keep,
        stage2_k,
        selected_indices,
        importances,
        f_scores,
    })
}

/// Fit the selection stage for any mode.
pub fn fit_selection(
    x: &Matrix,
    y: &[u8],
    mode: SelectionMode,
    params: &SelectionParams,
    seed: u64,
) -> Result<SelectionModel> {
    match mode {
        SelectionMode::None => Ok(SelectionModel {
            mode,
            stage1_keep: x.n_cols(),
            stage2_k: x.n_cols(),
            selected_indices: (0..x.n_cols()).collect(),
            importances: Vec::new(),
            f_scores: Vec::new(),
        }),
        SelectionMode::KBestOnly => {
            let f_scores = anova_f_scores(x, y)?;
            let k = params.kbest_k.min(x.n_cols());
            Ok(SelectionModel {
                mode,
                stage1_keep: x.n_cols(),
                stage2_k: k,
                selected_indices: top_k(&f_scores, k, None),
                importances: Vec::new(),
                f_scores,
            })
        }
        SelectionMode::Hybrid => fit_hybrid(
            x,
            y,
            params.stage1_keep,
            params.stage2_k,
            params.n_trees,
            seed,
        ),
    }
}

/// Scaler plus selection, fitted together on training rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedSelector {
    pub scaler: StandardScaler,
    pub model: SelectionModel,
    n_features: usize,
}

impl FittedSelector {
    pub fn fit(
        x_train: &Matrix,
        y_train: &[u8],
        mode: SelectionMode,
        params: &SelectionParams,
        seed: u64,
    ) -> Result<Self> {
        let scaler = StandardScaler::fit(x_train)?;
        let scaled = scaler.transform(x_train)?;
        let model = fit_selection(&scaled, y_train, mode, params, seed)?;
        Ok(Self {
            scaler,
            model,
            n_features: x_train.n_cols(),
        })
    }

    /// Scale with the training statistics, then keep the selected columns.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.check_cols(self.n_features)?;
        let scaled = self.scaler.transform(x)?;
        Ok(scaled.select_columns(&self.model.selected_indices))
    }

    /// Selected feature names given the full name list.
    pub fn selected_names<'a>(&self, names: &'a [&'a str]) -> Vec<&'a str> {
        self.model
            .selected_indices
            .iter()
            .map(|&j| names[j])
            .collect()
    }

    /// Write the selection report (importances, F scores, kept features).
    pub fn write_report(&self, path: &Path, feature_names: &[&str]) -> Result<()> {
        let report = serde_json::json!({
            "mode": self.model.mode,
            "stage1_keep": self.model.stage1_keep,
            "stage2_k": self.model.stage2_k,
            "selected_indices": self.model.selected_indices,
            "selected_features": self.selected_names(feature_names),
            "importances": self.model.importances,
            "f_scores": self.model.f_scores,
        });
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent one-way ANOVA via the total/within decomposition
    /// (SSB = SST - SSW), a different route than the implementation.
    fn anova_oracle(values: &[f64], y: &[u8]) -> f64 {
        let n = values.len() as f64;
        let grand = values.iter().sum::<f64>() / n;
        let sst: f64 = values.iter().map(|v| (v - grand) * (v - grand)).sum();
        let mut ssw = 0.0;
        for class in 0..2u8 {
            let group: Vec<f64> = values
                .iter()
                .zip(y)
                .filter(|(_, &t)| t == class)
                .map(|(v, _)| *v)
                .collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            ssw += group.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        let ssb = sst - ssw;
        if ssw <= 0.0 {
            return if ssb <= 1e-12 { 0.0 } else { F_SCORE_CAP };
        }
        (ssb / 1.0) / (ssw / (n - 2.0))
    }

    fn planted_dataset(
        n: usize,
        d: usize,
        signal: &[usize],
        shift: f64,
        seed: u64,
    ) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let label = rng.gen_range(0..2u8);
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                let base = crate::rngutil::gauss(&mut rng);
                if signal.contains(&j) && label == 1 {
                    row.push(base + shift);
                } else {
                    row.push(base);
                }
            }
            rows.push(row);
            labels.push(label);
        }
        (Matrix::from_rows(&rows), labels)
    }

    #[test]
    fn scaler_population_statistics() {
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0]]);
        let scaler = StandardScaler::fit(&x).unwrap();
        assert_eq!(scaler.means, vec![2.0]);
        assert_eq!(scaler.stds, vec![1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Matrix::from_rows(&[vec![7.0, 1.0], vec![7.0, 3.0], vec![7.0, 5.0]]);
        let scaler = StandardScaler::fit(&x).unwrap();
        assert_eq!(scaler.stds[0], 1.0);
        let t = scaler.transform(&x).unwrap();
        assert!(t.column(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn transformed_train_has_zero_mean() {
        let (x, _) = crate::synth::gaussian_blobs(50, 4, 2.0, 3.0, 3);
        let scaler = StandardScaler::fit(&x).unwrap();
        let t = scaler.transform(&x).unwrap();
        for j in 0..4 {
            let mean: f64 = t.column(j).iter().sum::<f64>() / t.n_rows() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn f_zero_when_classes_identical() {
        let x = Matrix::from_rows(&[vec![2.0], vec![5.0], vec![2.0], vec![5.0]]);
        let y = vec![0, 0, 1, 1];
        let scores = anova_f_scores(&x, &y).unwrap();
        assert!(scores[0].abs() < 1e-12);
    }

    #[test]
    fn hand_case_matches_oracle() {
        // Class 0 = {0, 0, 1, 1}, class 1 = {10, 10, 11, 11}. The oracle
        // evaluates to 600 by direct computation.
        let values = [0.0, 0.0, 1.0, 1.0, 10.0, 10.0, 11.0, 11.0];
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let expected = anova_oracle(&values, &y);
        assert!((expected - 600.0).abs() < 1e-9, "oracle value {expected}");
        let x = Matrix::from_rows(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>());
        let scores = anova_f_scores(&x, &y).unwrap();
        assert!((scores[0] - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn f_matches_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.gen_range(8..60);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            // Random class sizes, at least 2 per class.
            for i in 4..n {
                y[i] = rng.gen_range(0..2);
            }
            let x = Matrix::from_rows(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>());
            let expected = anova_oracle(&values, &y);
            let got = anova_f_scores(&x, &y).unwrap()[0];
            assert!(
                (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                "impl {got} oracle {expected}"
            );
        }
    }

    #[test]
    fn importance_sums_to_one_and_finds_planted_feature() {
        let (x, y) = planted_dataset(200, 8, &[0], 3.0, 9);
        let imp = extra_trees_importance(&x, &y, 100, 5).unwrap();
        let sum: f64 = imp.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let argmax = imp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
    }

    #[test]
    fn noise_importances_stay_flat() {
        let mut hits = 0;
        for seed in 0..10u64 {
            let (x, y) = planted_dataset(200, 10, &[], 0.0, 100 + seed);
            let imp = extra_trees_importance(&x, &y, 60, seed).unwrap();
            let mean = imp.iter().sum::<f64>() / imp.len() as f64;
            let max = imp.iter().cloned().fold(0.0f64, f64::max);
            if max < 3.0 * mean {
                hits += 1;
            }
        }
        assert!(hits >= 8, "flat-importance check passed in {hits}/10 seeds");
    }

    #[test]
    fn hybrid_recovers_contiguous_signal_block() {
        let signal: Vec<usize> = (0..13).collect();
        let (x, y) = planted_dataset(600, 22, &signal, 2.0, 17);
        let model = fit_hybrid(&x, &y, 18, 13, 120, 3).unwrap();
        assert_eq!(model.selected_indices, signal);
    }

    #[test]
    fn identity_selection_when_sizes_match_dimension() {
        let (x, y) = planted_dataset(60, 6, &[1], 2.0, 4);
        let model = fit_hybrid(&x, &y, 6, 6, 30, 1).unwrap();
        assert_eq!(model.selected_indices, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn same_seed_same_selection() {
        let (x, y) = planted_dataset(200, 22, &[2, 5, 9], 1.0, 8);
        let a = fit_hybrid(&x, &y, 18, 13, 60, 42).unwrap();
        let b = fit_hybrid(&x, &y, 18, 13, 60, 42).unwrap();
        assert_eq!(a.selected_indices, b.selected_indices);
        assert_eq!(a.importances, b.importances);
        assert_eq!(a.f_scores, b.f_scores);
    }

    #[test]
    fn stage_two_is_contained_in_stage_one() {
        for seed in 0..5u64 {
            let (x, y) = planted_dataset(150, 22, &[0, 3, 7, 11], 0.8, 50 + seed);
            let model = fit_hybrid(&x, &y, 18, 13, 50, seed).unwrap();
            let survivors = top_k(&model.importances, 18, None);
            assert!(model.selected_indices.iter().all(|i| survivors.contains(i)));
        }
    }

    #[test]
    fn transform_uses_train_statistics_only() {
        let (x_train, y_train) = planted_dataset(100, 22, &[0, 1], 2.0, 6);
        let selector = FittedSelector::fit(
            &x_train,
            &y_train,
            SelectionMode::Hybrid,
            &SelectionParams::default(),
            1,
        )
        .unwrap();

        // Pathological test set: wildly different location and scale. The
        // transform must depend only on train parameters.
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..22).map(|j| 1e6 + (i * j) as f64).collect())
            .collect();
        let test = Matrix::from_rows(&rows);
        let out = selector.transform(&test).unwrap();
        let manual = selector
            .scaler
            .transform(&test)
            .unwrap()
            .select_columns(&selector.model.selected_indices);
        assert_eq!(out, manual);
        // Recompute the selector on the same training rows: identical params.
        let again = FittedSelector::fit(
            &x_train,
            &y_train,
            SelectionMode::Hybrid,
            &SelectionParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(selector.scaler, again.scaler);
        assert_eq!(selector.model, again.model);
    }

    #[test]
    fn mode_none_keeps_all_columns() {
        let (x, y) = planted_dataset(50, 5, &[0], 1.0, 2);
        let selector =
            FittedSelector::fit(&x, &y, SelectionMode::None, &SelectionParams::default(), 1)
                .unwrap();
        let out = selector.transform(&x).unwrap();
        assert_eq!(out.n_cols(), 5);
    }

    #[test]
    fn column_permutation_selects_the_same_feature_set() {
        let signal = [1usize, 4, 6];
        let (x, y) = planted_dataset(300, 8, &signal, 2.0, 12);
        let params = SelectionParams {
            stage1_keep: 5,
            stage2_k: 3,
            kbest_k: 3,
            n_trees: 80,
        };
        let base = fit_selection(&x, &y, SelectionMode::KBestOnly, &params, 7).unwrap();

        // Rotate the columns and map the selection back.
        let perm: Vec<usize> = (0..8).map(|j| (j + 3) % 8).collect();
        let xp = x.select_columns(&perm);
        let permuted = fit_selection(&xp, &y, SelectionMode::KBestOnly, &params, 7).unwrap();
        let mut mapped: Vec<usize> = permuted.selected_indices.iter().map(|&j| perm[j]).collect();
        mapped.sort_unstable();
        assert_eq!(mapped, base.selected_indices);
    }
}
