//! Voting ensembles, including the nested soft-voting configuration used as
//! the headline model.
//!
//! `Voting_Soft` averages five base learners; the final model averages three
//! of those families plus `Voting_Soft` itself, so one member is a whole
//! ensemble. Member seeds derive from the master seed plus the member index,
//! which keeps runs reproducible while decorrelating members.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{self, Family, ModelSpec, SgdLoss, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VotingStrategy {
    Hard,
    Soft,
}

/// One ensemble member: a plain model or a nested voting ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnsembleMember {
    Model(ModelSpec),
    Voting(VotingSpec),
}

impl EnsembleMember {
    fn supports_proba(&self) -> bool {
        match self {
            EnsembleMember::Model(spec) => !matches!(
                spec.family,
                Family::SgdLinear {
                    loss: SgdLoss::Hinge
                }
            ),
            EnsembleMember::Voting(spec) => spec.strategy == VotingStrategy::Soft,
        }
    }
}

/// Declarative voting ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingSpec {
    pub members: Vec<EnsembleMember>,
    pub strategy: VotingStrategy,
    /// Per-member weights; `None` means uniform.
    pub weights: Option<Vec<f64>>,
}

impl VotingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::InvalidConfig(
                "a voting ensemble needs at least two members".to_string(),
            ));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.members.len() {
                return Err(Error::WeightMismatch {
                    members: self.members.len(),
                    got: w.len(),
                });
            }
            if w.iter().any(|v| *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidConfig(
                    "voting weights must be non-negative and not all zero".to_string(),
                ));
            }
        }
        if self.strategy == VotingStrategy::Soft {
            if let Some(bad) = self.members.iter().position(|m| !m.supports_proba()) {
                return Err(Error::UnsupportedProbability(format!(
                    "soft-voting member {bad}"
                )));
            }
        }
        for member in &self.members {
            match member {
                EnsembleMember::Model(spec) => spec.validate()?,
                EnsembleMember::Voting(spec) => spec.validate()?,
            }
        }
        Ok(())
    }
}

/// Weighted arithmetic mean of member probability rows; the result is
/// normalized by the weight total, so rows sum to 1 whenever member rows do.
pub fn soft_vote_proba(
    member_probas: &[Vec<[f64; 2]>],
    weights: Option<&[f64]>,
) -> Result<Vec<[f64; 2]>> {
    let m = member_probas.len();
    if m == 0 {
        return Err(Error::InvalidConfig("no member probabilities".to_string()));
    }
    if let Some(w) = weights {
        if w.len() != m {
            return Err(Error::WeightMismatch {
                members: m,
                got: w.len(),
            });
        }
    }
    let rows = member_probas[0].len();
    for p in member_probas {
        if p.len() != rows {
            return Err(Error::LengthMismatch {
                left: rows,
                right: p.len(),
            });
        }
    }
    let total: f64 = match weights {
        Some(w) => w.iter().sum(),
        None => m as f64,
    };
    if total <= 0.0 {
        return Err(Error::InvalidConfig("zero total voting weight".to_string()));
    }
    let mut out = vec![[0.0f64; 2]; rows];
    for (k, proba) in member_probas.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        for (acc, p) in out.iter_mut().zip(proba) {
            acc[0] += w * p[0];
            acc[1] += w * p[1];
        }
    }
    for acc in &mut out {
        acc[0] /= total;
        acc[1] /= total;
    }
    Ok(out)
}

/// Per-row majority vote; ties go to class 0.
pub fn hard_vote(member_labels: &[Vec<u8>]) -> Result<Vec<u8>> {
    if member_labels.len() < 2 {
        return Err(Error::InvalidConfig(
            "hard vote needs at least two members".to_string(),
        ));
    }
    let rows = member_labels[0].len();
    for labels in member_labels {
        if labels.len() != rows {
            return Err(Error::LengthMismatch {
                left: rows,
                right: labels.len(),
            });
        }
    }
    Ok((0..rows)
        .map(|i| {
            let ones = member_labels.iter().filter(|l| l[i] == 1).count();
            (2 * ones > member_labels.len()) as u8
        })
        .collect())
}

/// A fitted member.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrainedMember {
    Model(TrainedModel),
    Voting(TrainedVoting),
}

impl TrainedMember {
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<[f64; 2]>> {
        match self {
            TrainedMember::Model(m) => m.predict_proba(x),
            TrainedMember::Voting(v) => v.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        match self {
            TrainedMember::Model(m) => m.predict(x),
            TrainedMember::Voting(v) => v.predict(x),
        }
    }
}

/// A fitted voting ensemble; members are fitted independently on identical
/// training data, nested ensembles recursively.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedVoting {
    pub strategy: VotingStrategy,
    pub weights: Option<Vec<f64>>,
    pub members: Vec<TrainedMember>,
}

pub fn fit_voting(spec: &VotingSpec, x: &Matrix, y: &[u8]) -> Result<TrainedVoting> {
    spec.validate()?;
    let mut members = Vec::with_capacity(spec.members.len());
    for member in &spec.members {
        members.push(match member {
            EnsembleMember::Model(m) => TrainedMember::Model(models::fit(m, x, y)?),
            EnsembleMember::Voting(v) => TrainedMember::Voting(fit_voting(v, x, y)?),
        });
    }
    Ok(TrainedVoting {
        strategy: spec.strategy,
        weights: spec.weights.clone(),
        members,
    })
}

impl TrainedVoting {
    /// Soft-vote probabilities; hard ensembles have no probability output.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<[f64; 2]>> {
        if self.strategy != VotingStrategy::Soft {
            return Err(Error::UnsupportedProbability("Voting_Hard".to_string()));
        }
        let probas: Vec<Vec<[f64; 2]>> = self
            .members
            .iter()
            .map(|m| m.predict_proba(x))
            .collect::<Result<_>>()?;
        soft_vote_proba(&probas, self.weights.as_deref())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        match self.strategy {
            VotingStrategy::Soft => Ok(self
                .predict_proba(x)?
                .into_iter()
                .map(|p| (p[1] > p[0]) as u8)
                .collect()),
            VotingStrategy::Hard => {
                let labels: Vec<Vec<u8>> = self
                    .members
                    .iter()
                    .map(|m| m.predict(x))
                    .collect::<Result<_>>()?;
                hard_vote(&labels)
            }
        }
    }
}

/// The five base learners behind `Voting_Soft`, seeds derived from
/// `master + index`.
fn base_five(master_seed: u64) -> Result<Vec<EnsembleMember>> {
    Ok(vec![
        EnsembleMember::Model(models::registry_spec("NB_Gaussian", master_seed)?),
        EnsembleMember::Model(models::registry_spec("SVM_Poly", master_seed + 1)?),
        EnsembleMember::Model(models::registry_spec("MLP_50_50", master_seed + 2)?),
        EnsembleMember::Model(models::registry_spec("GB", master_seed + 3)?),
        EnsembleMember::Model(models::registry_spec("Ada", master_seed + 4)?),
    ])
}

/// Soft vote over the five base learners.
pub fn voting_soft_spec(master_seed: u64) -> Result<VotingSpec> {
    Ok(VotingSpec {
        members: base_five(master_seed)?,
        strategy: VotingStrategy::Soft,
        weights: None,
    })
}

/// Hard vote over the same five base learners.
pub fn voting_hard_spec(master_seed: u64) -> Result<VotingSpec> {
    Ok(VotingSpec {
        members: base_five(master_seed)?,
        strategy: VotingStrategy::Hard,
        weights: None,
    })
}

/// The nested final model: soft vote over Gaussian NB, the 50-50 MLP, the
/// polynomial SVM, and `Voting_Soft` itself.
pub fn final_ensemble_spec(master_seed: u64) -> Result<VotingSpec> {
    Ok(VotingSpec {
        members: vec![
            EnsembleMember::Model(models::registry_spec("NB_Gaussian", master_seed)?),
            EnsembleMember::Model(models::registry_spec("MLP_50_50", master_seed + 1)?),
            EnsembleMember::Model(models::registry_spec("SVM_Poly", master_seed + 2)?),
            EnsembleMember::Voting(voting_soft_spec(master_seed + 3)?),
        ],
        strategy: VotingStrategy::Soft,
        weights: None,
    })
}

/// Stacking: base learners feed their class-1 probabilities to a meta
/// learner. Base configurations and the meta learner are caller-chosen; the
/// conventional default is a logistic-regression meta model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingSpec {
    pub members: Vec<EnsembleMember>,
    pub meta: ModelSpec,
    /// Folds for out-of-fold meta-feature generation.
    pub n_folds: usize,
}

impl StackingSpec {
    /// Stack the given members under a logistic-regression meta learner.
    pub fn with_logistic_meta(members: Vec<EnsembleMember>, seed: u64) -> Result<Self> {
        Ok(Self {
            members,
            meta: models::registry_spec("LR_Newton", seed)?,
            n_folds: 5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::InvalidConfig(
                "stacking needs at least two base members".to_string(),
            ));
        }
        if self.n_folds < 2 {
            return Err(Error::InvalidConfig(
                "stacking needs at least two folds".to_string(),
            ));
        }
        if let Some(bad) = self.members.iter().position(|m| !m.supports_proba()) {
            return Err(Error::UnsupportedProbability(format!(
                "stacking member {bad}"
            )));
        }
        for member in &self.members {
            match member {
                EnsembleMember::Model(spec) => spec.validate()?,
                EnsembleMember::Voting(spec) => spec.validate()?,
            }
        }
        self.meta.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedStacking {
    pub members: Vec<TrainedMember>,
    pub meta: TrainedModel,
}

fn fit_member(member: &EnsembleMember, x: &Matrix, y: &[u8]) -> Result<TrainedMember> {
    Ok(match member {
        EnsembleMember::Model(m) => TrainedMember::Model(models::fit(m, x, y)?),
        EnsembleMember::Voting(v) => TrainedMember::Voting(fit_voting(v, x, y)?),
    })
}

/// Fit a stacking ensemble: meta features are out-of-fold base-member
/// probabilities (seeded round-robin folds), the meta learner is fitted on
/// those, and the base members are then refitted on the full training data.
pub fn fit_stacking(
    spec: &StackingSpec,
    x: &Matrix,
    y: &[u8],
    seed: u64,
) -> Result<TrainedStacking> {
    spec.validate()?;
    let n = x.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
    }
    let n_folds = spec.n_folds.min(n);
    let fold_of: Vec<usize> = {
        let mut fold = vec![0usize; n];
        for (pos, &row) in order.iter().enumerate() {
            fold[row] = pos % n_folds;
        }
        fold
    };

    let mut meta_features = Matrix::zeros(n, spec.members.len());
    for fold in 0..n_folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let hold_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if hold_idx.is_empty() {
            continue;
        }
        let x_fold = x.select_rows(&train_idx);
        let y_fold: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
        let x_hold = x.select_rows(&hold_idx);
        for (m, member) in spec.members.iter().enumerate() {
            let fitted = fit_member(member, &x_fold, &y_fold)?;
            let proba = fitted.predict_proba(&x_hold)?;
            for (k, &row) in hold_idx.iter().enumerate() {
                meta_features.set(row, m, proba[k][1]);
            }
        }
    }

    let meta = models::fit(&spec.meta, &meta_features, y)?;
    let members = spec
        .members
        .iter()
        .map(|member| fit_member(member, x, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedStacking { members, meta })
}

impl TrainedStacking {
    fn meta_features(&self, x: &Matrix) -> Result<Matrix> {
        let mut features = Matrix::zeros(x.n_rows(), self.members.len());
        for (m, member) in self.members.iter().enumerate() {
            let proba = member.predict_proba(x)?;
            for (i, p) in proba.iter().enumerate() {
                features.set(i, m, p[1]);
            }
        }
        Ok(features)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<[f64; 2]>> {
        self.meta.predict_proba(&self.meta_features(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        self.meta.predict(&self.meta_features(x)?)
    }
}

#[derive(Serialize, Deserialize)]
struct VotingManifest {
    format_version: u32,
    strategy: VotingStrategy,
    weights: Option<Vec<f64>>,
    members: Vec<MemberRef>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MemberRef {
    Model { file: String },
    Voting { dir: String },
}

/// Persist an ensemble as a manifest plus one file (or directory) per member.
pub fn save_voting(ensemble: &TrainedVoting, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut members = Vec::new();
    for (i, member) in ensemble.members.iter().enumerate() {
        match member {
            TrainedMember::Model(model) => {
                let file = format!("member_{i:02}.json");
                models::save_model(model, &dir.join(&file))?;
                members.push(MemberRef::Model { file });
            }
            TrainedMember::Voting(nested) => {
                let sub = format!("member_{i:02}_voting");
                save_voting(nested, &dir.join(&sub))?;
                members.push(MemberRef::Voting { dir: sub });
            }
        }
    }
    let manifest = VotingManifest {
        format_version: 1,
        strategy: ensemble.strategy,
        weights: ensemble.weights.clone(),
        members,
    };
    std::fs::write(
        dir.join("ensemble.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_voting(dir: &Path) -> Result<TrainedVoting> {
    let text = std::fs::read_to_string(dir.join("ensemble.json"))?;
    let manifest: VotingManifest = serde_json::from_str(&text)?;
    let mut members = Vec::new();
    for member in manifest.members {
        members.push(match member {
            MemberRef::Model { file } => TrainedMember::Model(models::load_model(&dir.join(file))?),
            MemberRef::Voting { dir: sub } => TrainedMember::Voting(load_voting(&dir.join(sub))?),
        });
    }
    Ok(TrainedVoting {
        strategy: manifest.strategy,
        weights: manifest.weights,
        members,
    })
}
