//! Evaluation protocols, metrics, and the experiment runner.
//!
//! Two protocols: *personalized* splits each (subject, emotion) group with at
//! least 12 epochs 75/25 within the group (chronologically by default), so
//! test subjects were seen in training; *generalized* holds out ~20% of
//! subjects entirely. For every run the scaler and feature selection are
//! fitted on training rows only and applied frozen to the test rows.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{self, TrainedVoting};
use crate::error::{Error, Result};
use crate::features::{FeatureTable, FEATURE_NAMES};
use crate::ingest::Emotion;
use crate::matrix::Matrix;
use crate::models::{self, TrainedModel, REGISTRY_NAMES};
use crate::selection::{FittedSelector, SelectionMode, SelectionParams};

/// Evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Personalized,
    Generalized,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Personalized => "personalized",
            Protocol::Generalized => "generalized",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "personalized" => Ok(Protocol::Personalized),
            "generalized" => Ok(Protocol::Generalized),
            other => Err(Error::InvalidConfig(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Split construction knobs; defaults are the published protocol.
#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    /// Personalized: assign epochs within a group randomly instead of
    /// chronologically.
    pub shuffle_within_group: bool,
    /// Personalized: minimum epochs for a group to participate.
    pub min_group_epochs: usize,
    /// Personalized: fraction of each group that goes to training (floor).
    pub train_fraction: f64,
    /// Generalized: fraction of subjects held out for testing (rounded,
    /// minimum one).
    pub test_subject_fraction: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            shuffle_within_group: false,
            min_group_epochs: 12,
            train_fraction: 0.75,
            test_subject_fraction: 0.2,
        }
    }
}

/// Row-index split for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
    /// Held-out subject ids (generalized protocol only).
    pub test_subjects: Vec<String>,
}

fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Build a split plan for the given protocol; deterministic per seed.
pub fn make_split(
    table: &FeatureTable,
    protocol: Protocol,
    seed: u64,
    opts: &SplitOptions,
) -> Result<SplitPlan> {
    match protocol {
        Protocol::Personalized => {
            let mut groups: BTreeMap<(String, Emotion), Vec<usize>> = BTreeMap::new();
            for (i, row) in table.rows().iter().enumerate() {
                groups
                    .entry((row.subject_id.clone(), row.emotion))
                    .or_default()
                    .push(i);
            }
            let mut train_rows = Vec::new();
            let mut test_rows = Vec::new();
            let mut eligible = 0usize;
            for ((_, _), mut rows) in groups {
                if rows.len() < opts.min_group_epochs {
                    continue;
                }
                eligible += 1;
                rows.sort_by_key(|&i| table.rows()[i].epoch_index);
                if opts.shuffle_within_group {
                    seeded_shuffle(&mut rows, seed ^ (eligible as u64));
                }
                let n_train = ((rows.len() as f64) * opts.train_fraction).floor() as usize;
                train_rows.extend_from_slice(&rows[..n_train]);
                test_rows.extend_from_slice(&rows[n_train..]);
            }
            if eligible == 0 {
                return Err(Error::NoEligibleGroups(opts.min_group_epochs));
            }
            train_rows.sort_unstable();
            test_rows.sort_unstable();
            Ok(SplitPlan {
                protocol,
                train_rows,
                test_rows,
                seed,
                test_subjects: Vec::new(),
            })
        }
        Protocol::Generalized => {
            let subjects: BTreeSet<String> =
                table.rows().iter().map(|r| r.subject_id.clone()).collect();
            let n_subjects = subjects.len();
            if n_subjects < 5 {
                return Err(Error::TooFewSubjects {
                    needed: 5,
                    got: n_subjects,
                });
            }
            let mut ordered: Vec<String> = subjects.into_iter().collect();
            seeded_shuffle(&mut ordered, seed);
            let n_test = ((n_subjects as f64 * opts.test_subject_fraction).round() as usize).max(1);
            let mut test_subjects: Vec<String> = ordered[..n_test].to_vec();
            test_subjects.sort();
            let test_set: BTreeSet<&String> = test_subjects.iter().collect();
            let mut train_rows = Vec::new();
            let mut test_rows = Vec::new();
            for (i, row) in table.rows().iter().enumerate() {
                if test_set.contains(&row.subject_id) {
                    test_rows.push(i);
                } else {
                    train_rows.push(i);
                }
            }
            Ok(SplitPlan {
                protocol,
                train_rows,
                test_rows,
                seed,
                test_subjects,
            })
        }
    }
}

/// Classification metrics in percent. Precision, recall, and F1 are
/// macro-averaged over the two classes, with 0/0 ratios defined as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn metrics(y_true: &[u8], y_pred: &[u8]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    let mut confusion = [[0usize; 2]; 2]; // [true][pred]
    for (t, p) in y_true.iter().zip(y_pred) {
        confusion[*t as usize][*p as usize] += 1;
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for c in 0..2 {
        let tp = confusion[c][c];
        let fp = confusion[1 - c][c];
        let fn_ = confusion[c][1 - c];
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        precision += p / 2.0;
        recall += r / 2.0;
        f1 += if p + r > 0.0 {
            2.0 * p * r / (p + r) / 2.0
        } else {
            0.0
        };
    }
    let accuracy = (confusion[0][0] + confusion[1][1]) as f64 / y_true.len() as f64;
    Ok(Metrics {
        accuracy: 100.0 * accuracy,
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        f1: 100.0 * f1,
    })
}

/// Train/test matrices after leakage-safe scaling and selection.
#[derive(Debug)]
pub struct PreparedData {
    pub x_train: Matrix,
    pub y_train: Vec<u8>,
    pub x_test: Matrix,
    pub y_test: Vec<u8>,
    pub selector: FittedSelector,
}

/// Fit the scaler and selection on the training rows of `split`, then
/// transform both sides.
pub fn prepare_features(
    table: &FeatureTable,
    split: &SplitPlan,
    mode: SelectionMode,
    params: &SelectionParams,
    seed: u64,
) -> Result<PreparedData> {
    let full = table.matrix();
    let labels = table.labels();
    let x_train_raw = full.select_rows(&split.train_rows);
    let y_train: Vec<u8> = split.train_rows.iter().map(|&i| labels[i]).collect();
    let x_test_raw = full.select_rows(&split.test_rows);
    let y_test: Vec<u8> = split.test_rows.iter().map(|&i| labels[i]).collect();

    let selector = FittedSelector::fit(&x_train_raw, &y_train, mode, params, seed)?;
    Ok(PreparedData {
        x_train: selector.transform(&x_train_raw)?,
        y_train,
        x_test: selector.transform(&x_test_raw)?,
        y_test,
        selector,
    })
}

/// A fitted model or voting ensemble behind one prediction interface.
pub enum FittedAny {
    Model(TrainedModel),
    Voting(TrainedVoting),
}

impl FittedAny {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        match self {
            FittedAny::Model(m) => m.predict(x),
            FittedAny::Voting(v) => v.predict(x),
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<[f64; 2]>> {
        match self {
            FittedAny::Model(m) => m.predict_proba(x),
            FittedAny::Voting(v) => v.predict_proba(x),
        }
    }
}

/// Resolve a report row name (registry entry, `Voting_Soft`, `Voting_Hard`,
/// or `Ensemble`) and fit it.
pub fn resolve_and_fit(name: &str, seed: u64, x: &Matrix, y: &[u8]) -> Result<FittedAny> {
    match name {
        "Ensemble" => Ok(FittedAny::Voting(ensemble::fit_voting(
            &ensemble::final_ensemble_spec(seed)?,
            x,
            y,
        )?)),
        "Voting_Soft" => Ok(FittedAny::Voting(ensemble::fit_voting(
            &ensemble::voting_soft_spec(seed)?,
            x,
            y,
        )?)),
        "Voting_Hard" => Ok(FittedAny::Voting(ensemble::fit_voting(
            &ensemble::voting_hard_spec(seed)?,
            x,
            y,
        )?)),
        other => Ok(FittedAny::Model(models::fit(
            &models::registry_spec(other, seed)?,
            x,
            y,
        )?)),
    }
}

/// All report rows: the registry plus the voting ensembles.
pub fn default_model_names() -> Vec<String> {
    REGISTRY_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain([
            "Voting_Hard".to_string(),
            "Voting_Soft".to_string(),
            "Ensemble".to_string(),
        ])
        .collect()
}

/// Result for one model row.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOutcome {
    Metrics(Metrics),
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub model: String,
    pub outcome: ModelOutcome,
}

/// Per-model metrics for one protocol and selection mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: Protocol,
    pub fs_mode: SelectionMode,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_subjects: Vec<String>,
    pub entries: Vec<ReportEntry>,
}

impl EvaluationReport {
    pub fn get(&self, model: &str) -> Option<&Metrics> {
        self.entries.iter().find_map(|e| match &e.outcome {
            ModelOutcome::Metrics(m) if e.model == model => Some(m),
            _ => None,
        })
    }

    /// Successful rows sorted by accuracy, descending.
    pub fn sorted(&self) -> Vec<(&str, &Metrics)> {
        let mut rows: Vec<(&str, &Metrics)> = self
            .entries
            .iter()
            .filter_map(|e| match &e.outcome {
                ModelOutcome::Metrics(m) => Some((e.model.as_str(), m)),
                ModelOutcome::Failed { .. } => None,
            })
            .collect();
        rows.sort_by(|a, b| b.1.accuracy.partial_cmp(&a.1.accuracy).unwrap());
        rows
    }

    /// CSV mirror of the report tables: model, accuracy, precision, recall,
    /// f1 in percent with two decimals, sorted by accuracy descending.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("model,accuracy,precision,recall,f1\n");
        for (name, m) in self.sorted() {
            out.push_str(&format!(
                "{name},{:.2},{:.2},{:.2},{:.2}\n",
                m.accuracy, m.precision, m.recall, m.f1
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Experiment knobs shared by the runner and the CLI.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentOptions {
    pub split: SplitOptions,
    pub selection: SelectionParams,
}

impl ExperimentOptions {
    pub fn new() -> Self {
        Self {
            split: SplitOptions::default(),
            selection: SelectionParams::default(),
        }
    }
}

/// Run one experiment end to end: split, prepare, fit every named model,
/// score on the test rows. A failing model is recorded as a failed row and
/// does not abort the others.
pub fn run_experiment(
    table: &FeatureTable,
    protocol: Protocol,
    fs_mode: SelectionMode,
    model_names: &[String],
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<EvaluationReport> {
    let split = make_split(table, protocol, seed, &opts.split)?;
    run_experiment_with_split(table, &split, fs_mode, model_names, seed, opts)
}

/// Same as [`run_experiment`] but on an existing split (used by the ablation
/// grid so all modes share one split).
pub fn run_experiment_with_split(
    table: &FeatureTable,
    split: &SplitPlan,
    fs_mode: SelectionMode,
    model_names: &[String],
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<EvaluationReport> {
    let prep = prepare_features(table, split, fs_mode, &opts.selection, seed)?;
    Ok(score_models(&prep, split, fs_mode, model_names, seed))
}

/// Fit and score every named model on already-prepared data.
pub fn score_models(
    prep: &PreparedData,
    split: &SplitPlan,
    fs_mode: SelectionMode,
    model_names: &[String],
    seed: u64,
) -> EvaluationReport {
    let mut entries = Vec::with_capacity(model_names.len());
    for name in model_names {
        let outcome = resolve_and_fit(name, seed, &prep.x_train, &prep.y_train)
            .and_then(|model| model.predict(&prep.x_test))
            .and_then(|preds| metrics(&prep.y_test, &preds));
        entries.push(ReportEntry {
            model: name.clone(),
            outcome: match outcome {
                Ok(m) => ModelOutcome::Metrics(m),
                Err(e) => ModelOutcome::Failed {
                    error: e.to_string(),
                },
            },
        });
    }
    EvaluationReport {
        protocol: split.protocol,
        fs_mode,
        seed,
        train_rows: split.train_rows.len(),
        test_rows: split.test_rows.len(),
        test_subjects: split.test_subjects.clone(),
        entries,
    }
}

/// Selection report writer for one prepared run.
pub fn write_selection_report(prep: &PreparedData, path: &Path) -> Result<()> {
    prep.selector.write_report(path, &FEATURE_NAMES)
}

/// The three-mode ablation over a shared split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub none: EvaluationReport,
    pub hybrid: EvaluationReport,
    pub kbest: EvaluationReport,
}

/// One model row of the ablation comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub none: Option<f64>,
    pub hybrid: Option<f64>,
    pub kbest: Option<f64>,
    /// `no_fs` / `hybrid` / `kbest`, or `tie`.
    pub best: String,
}

impl AblationReport {
    pub fn rows(&self) -> Vec<AblationRow> {
        self.none
            .entries
            .iter()
            .map(|entry| {
                let name = entry.model.as_str();
                let acc = |r: &EvaluationReport| r.get(name).map(|m| m.accuracy);
                let none = acc(&self.none);
                let hybrid = acc(&self.hybrid);
                let kbest = acc(&self.kbest);
                let candidates = [("no_fs", none), ("hybrid", hybrid), ("kbest", kbest)];
                let best_acc = candidates
                    .iter()
                    .filter_map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let winners: Vec<&str> = candidates
                    .iter()
                    .filter(|(_, v)| v.is_some_and(|a| a == best_acc))
                    .map(|(n, _)| *n)
                    .collect();
                let best = if best_acc.is_infinite() {
                    "failed".to_string()
                } else if winners.len() > 1 {
                    "tie".to_string()
                } else {
                    winners[0].to_string()
                };
                AblationRow {
                    model: name.to_string(),
                    none,
                    hybrid,
                    kbest,
                    best,
                }
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fmt = |v: Option<f64>| v.map_or("".to_string(), |a| format!("{a:.2}"));
        let mut out = String::from("model,accuracy_no_fs,accuracy_hybrid,accuracy_kbest,best_fs\n");
        for row in self.rows() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.model,
                fmt(row.none),
                fmt(row.hybrid),
                fmt(row.kbest),
                row.best
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Run the three selection modes against one shared split.
pub fn run_ablation(
    table: &FeatureTable,
    protocol: Protocol,
    model_names: &[String],
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<AblationReport> {
    let split = make_split(table, protocol, seed, &opts.split)?;
    let run = |mode| run_experiment_with_split(table, &split, mode, model_names, seed, opts);
    Ok(AblationReport {
        none: run(SelectionMode::None)?,
        hybrid: run(SelectionMode::Hybrid)?,
        kbest: run(SelectionMode::KBestOnly)?,
    })
}
