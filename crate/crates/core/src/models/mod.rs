//! The classifier zoo behind one fit / predict / predict-probability
//! contract.
//!
//! Every family is implemented natively in the submodules and dispatched
//! through [`FittedState`], which keeps fitted models serializable without
//! trait objects. The named configurations used in reports live in the
//! registry ([`REGISTRY_NAMES`] / [`registry_spec`]).

pub mod boosting;
pub mod forest;
pub mod lda;
pub mod linear;
pub mod mlp;
pub mod naive_bayes;
pub mod neighbors;
pub mod svm;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::selection::StandardScaler;

pub use linear::{LogisticSolver, SgdLoss};
pub use neighbors::KnnWeights;
pub use svm::KernelKind;

/// Feature-count rule for extremely randomized trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => tree::sqrt_features(d),
            MaxFeatures::Log2 => tree::log2_features(d),
        }
    }
}

/// Classifier family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    LogisticRegression {
        solver: LogisticSolver,
    },
    SgdLinear {
        loss: SgdLoss,
    },
    GaussianNb,
    BernoulliNb {
        binarize_at: f64,
        alpha: f64,
    },
    Svm {
        kernel: KernelKind,
    },
    DecisionTree {
        max_depth: usize,
    },
    RandomForest {
        n_trees: usize,
        max_depth: Option<usize>,
    },
    ExtraTrees {
        n_trees: usize,
        max_features: MaxFeatures,
    },
    Lda,
    Knn {
        k: usize,
        weights: KnnWeights,
    },
    Mlp {
        hidden: Vec<usize>,
    },
    GradientBoosting {
        n_estimators: usize,
        learning_rate: f64,
    },
    AdaBoost {
        n_estimators: usize,
        learning_rate: f64,
    },
    Bagging {
        n_estimators: usize,
        sample_ratio: f64,
        feature_ratio: f64,
    },
}

/// Declarative model description; hyperparameters are validated at
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Standardize inputs with statistics learned at fit time.
    pub scale_inputs: bool,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, scale_inputs: bool, seed: u64) -> Result<Self> {
        let spec = Self {
            family,
            scale_inputs,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match &self.family {
            Family::BernoulliNb { alpha, .. } if *alpha <= 0.0 => {
                bad(format!("BernoulliNb alpha must be positive, got {alpha}"))
            }
            Family::DecisionTree { max_depth } if *max_depth == 0 => {
                bad("DecisionTree max_depth must be at least 1".to_string())
            }
            Family::RandomForest { n_trees, .. } | Family::ExtraTrees { n_trees, .. }
                if *n_trees == 0 =>
            {
                bad("tree ensembles need at least one tree".to_string())
            }
            Family::Knn { k, .. } if *k == 0 => bad("KNN needs k >= 1".to_string()),
            Family::Mlp { hidden } if hidden.is_empty() || hidden.iter().any(|h| *h == 0) => {
                bad("MLP needs at least one non-empty hidden layer".to_string())
            }
            Family::GradientBoosting {
                n_estimators,
                learning_rate,
            }
            | Family::AdaBoost {
                n_estimators,
                learning_rate,
            } if *n_estimators == 0 || *learning_rate <= 0.0 => {
                bad("boosting needs estimators >= 1 and a positive learning rate".to_string())
            }
            Family::Bagging {
                n_estimators,
                sample_ratio,
                feature_ratio,
            } if *n_estimators == 0
                || !(*sample_ratio > 0.0 && *sample_ratio <= 1.0)
                || !(*feature_ratio > 0.0 && *feature_ratio <= 1.0) =>
            {
                bad("bagging ratios must lie in (0, 1]".to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Fitted per-family state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedState {
    Logistic(linear::LogisticModel),
    Sgd(linear::SgdModel),
    GaussianNb(naive_bayes::GaussianNbModel),
    BernoulliNb(naive_bayes::BernoulliNbModel),
    Svm(svm::SvmModel),
    Tree(tree::ClassificationTree),
    Forest(forest::ForestModel),
    Bagging(forest::BaggingModel),
    Lda(lda::LdaModel),
    Knn(neighbors::KnnModel),
    Mlp(mlp::MlpModel),
    GradientBoosting(boosting::GbModel),
    AdaBoost(boosting::AdaModel),
}

/// A fitted classifier: spec echo, optional input scaler, fitted state, and
/// any non-fatal warnings recorded during training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    scaler: Option<StandardScaler>,
    state: FittedState,
    pub warnings: Vec<String>,
    n_features: usize,
}

/// Fit `spec` on `(x, y)`. Deterministic given the spec seed.
pub fn fit(spec: &ModelSpec, x: &Matrix, y: &[u8]) -> Result<TrainedModel> {
    spec.validate()?;
    x.check_finite()?;
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
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

    let mut warnings = Vec::new();
    let scaler = if spec.scale_inputs {
        Some(StandardScaler::fit(x)?)
    } else {
        None
    };
    let scaled;
    let x_fit = match &scaler {
        Some(s) => {
            scaled = s.transform(x)?;
            &scaled
        }
        None => x,
    };

    let state = match &spec.family {
        Family::LogisticRegression { solver } => {
            FittedState::Logistic(linear::fit_logistic(x_fit, y, *solver, &mut warnings))
        }
        Family::SgdLinear { loss } => FittedState::Sgd(linear::fit_sgd(x_fit, y, *loss, spec.seed)),
        Family::GaussianNb => FittedState::GaussianNb(naive_bayes::fit_gaussian_nb(x_fit, y)),
        Family::BernoulliNb { binarize_at, alpha } => FittedState::BernoulliNb(
            naive_bayes::fit_bernoulli_nb(x_fit, y, *binarize_at, *alpha),
        ),
        Family::Svm { kernel } => {
            FittedState::Svm(svm::fit_svm(x_fit, y, *kernel, spec.seed, &mut warnings))
        }
        Family::DecisionTree { max_depth } => {
            let params = tree::TreeParams {
                max_depth: Some(*max_depth),
                ..Default::default()
            };
            let mut rng = rand::SeedableRng::seed_from_u64(spec.seed);
            FittedState::Tree(tree::ClassificationTree::fit(
                x_fit, y, None, &params, &mut rng, None,
            ))
        }
        Family::RandomForest { n_trees, max_depth } => FittedState::Forest(
            forest::fit_random_forest(x_fit, y, *n_trees, *max_depth, spec.seed),
        ),
        Family::ExtraTrees {
            n_trees,
            max_features,
        } => FittedState::Forest(forest::fit_extra_trees(
            x_fit,
            y,
            *n_trees,
            max_features.resolve(x_fit.n_cols()),
            spec.seed,
            None,
        )),
        Family::Lda => FittedState::Lda(lda::fit_lda(x_fit, y)?),
        Family::Knn { k, weights } => FittedState::Knn(neighbors::fit_knn(x_fit, y, *k, *weights)),
        Family::Mlp { hidden } => {
            FittedState::Mlp(mlp::fit_mlp(x_fit, y, hidden, spec.seed, &mut warnings))
        }
        Family::GradientBoosting {
            n_estimators,
            learning_rate,
        } => {
            FittedState::GradientBoosting(boosting::fit_gb(x_fit, y, *n_estimators, *learning_rate))
        }
        Family::AdaBoost {
            n_estimators,
            learning_rate,
        } => FittedState::AdaBoost(boosting::fit_ada(
            x_fit,
            y,
            *n_estimators,
            *learning_rate,
            spec.seed,
        )),
        Family::Bagging {
            n_estimators,
            sample_ratio,
            feature_ratio,
        } => FittedState::Bagging(forest::fit_bagging(
            x_fit,
            y,
            *n_estimators,
            *sample_ratio,
            *feature_ratio,
            spec.seed,
        )),
    };

    Ok(TrainedModel {
        spec: spec.clone(),
        scaler,
        state,
        warnings,
        n_features: x.n_cols(),
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Whether `predict_proba` is available for this family.
    pub fn supports_proba(&self) -> bool {
        !matches!(
            self.spec.family,
            Family::SgdLinear {
                loss: SgdLoss::Hinge
            }
        )
    }

    fn scaled<'a>(&self, x: &'a Matrix, buffer: &'a mut Option<Matrix>) -> Result<&'a Matrix> {
        x.check_cols(self.n_features)?;
        match &self.scaler {
            Some(s) => {
                *buffer = Some(s.transform(x)?);
                Ok(buffer.as_ref().unwrap())
            }
            None => Ok(x),
        }
    }

    /// Per-row `[p(class 0), p(class 1)]`; rows sum to 1.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<[f64; 2]>> {
        let mut buffer = None;
        let x = self.scaled(x, &mut buffer)?;
        let rows = 0..x.n_rows();
        let proba: Vec<[f64; 2]> = match &self.state {
            FittedState::Logistic(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Sgd(m) => rows
                .map(|i| m.proba(x.row(i)))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::UnsupportedProbability("SGD_Hinge".to_string()))?,
            FittedState::GaussianNb(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::BernoulliNb(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Svm(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Tree(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Forest(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Bagging(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Lda(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Knn(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::Mlp(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::GradientBoosting(m) => rows.map(|i| m.proba(x.row(i))).collect(),
            FittedState::AdaBoost(m) => rows.map(|i| m.proba(x.row(i))).collect(),
        };
        Ok(proba)
    }

    /// Hard labels; the argmax of `predict_proba` for probabilistic
    /// families, the margin sign for hinge-loss SGD.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        if let FittedState::Sgd(m) = &self.state {
            if m.loss == SgdLoss::Hinge {
                let mut buffer = None;
                let x = self.scaled(x, &mut buffer)?;
                return Ok((0..x.n_rows()).map(|i| m.predict_row(x.row(i))).collect());
            }
        }
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| (p[1] > p[0]) as u8)
            .collect())
    }
}

/// Names of the built-in model configurations, in report order.
pub const REGISTRY_NAMES: [&str; 23] = [
    "LR_Lib",
    "LR_Newton",
    "SGD_Log",
    "SGD_Hinge",
    "NB_Gaussian",
    "NB_Bernoulli",
    "SVM_RBF",
    "SVM_Linear",
    "SVM_Poly",
    "DT_Depth5",
    "DT_Depth10",
    "RF_Depth10",
    "RF_Depth20",
    "XTRA_Sqrt",
    "XTRA_Log2",
    "LDA",
    "KNN_5_Uniform",
    "KNN_7_Distance",
    "MLP_100",
    "MLP_50_50",
    "GB",
    "Ada",
    "Bagging",
];

/// Resolve a registry name into its configuration.
pub fn registry_spec(name: &str, seed: u64) -> Result<ModelSpec> {
    let spec = |family, scale_inputs| ModelSpec::new(family, scale_inputs, seed);
    match name {
        "LR_Lib" => spec(
            Family::LogisticRegression {
                solver: LogisticSolver::Coordinate,
            },
            true,
        ),
        "LR_Newton" => spec(
            Family::LogisticRegression {
                solver: LogisticSolver::Newton,
            },
            false,
        ),
        "SGD_Log" => spec(Family::SgdLinear { loss: SgdLoss::Log }, false),
        "SGD_Hinge" => spec(
            Family::SgdLinear {
                loss: SgdLoss::Hinge,
            },
            false,
        ),
        "NB_Gaussian" => spec(Family::GaussianNb, false),
        "NB_Bernoulli" => spec(
            Family::BernoulliNb {
                binarize_at: 0.0,
                alpha: 1.0,
            },
            false,
        ),
        "SVM_RBF" => spec(
            Family::Svm {
                kernel: KernelKind::Rbf,
            },
            true,
        ),
        "SVM_Linear" => spec(
            Family::Svm {
                kernel: KernelKind::Linear,
            },
            true,
        ),
        "SVM_Poly" => spec(
            Family::Svm {
                kernel: KernelKind::Poly,
            },
            true,
        ),
        "DT_Depth5" => spec(Family::DecisionTree { max_depth: 5 }, false),
        "DT_Depth10" => spec(Family::DecisionTree { max_depth: 10 }, false),
        "RF_Depth10" => spec(
            Family::RandomForest {
                n_trees: 300,
                max_depth: Some(10),
            },
            false,
        ),
        "RF_Depth20" => spec(
            Family::RandomForest {
                n_trees: 300,
                max_depth: Some(20),
            },
            false,
        ),
        "XTRA_Sqrt" => spec(
            Family::ExtraTrees {
                n_trees: 100,
                max_features: MaxFeatures::Sqrt,
            },
            false,
        ),
        "XTRA_Log2" => spec(
            Family::ExtraTrees {
                n_trees: 100,
                max_features: MaxFeatures::Log2,
            },
            false,
        ),
        "LDA" => spec(Family::Lda, false),
        "KNN_5_Uniform" => spec(
            Family::Knn {
                k: 5,
                weights: KnnWeights::Uniform,
            },
            false,
        ),
        "KNN_7_Distance" => spec(
            Family::Knn {
                k: 7,
                weights: KnnWeights::Distance,
            },
            false,
        ),
        "MLP_100" => spec(Family::Mlp { hidden: vec![100] }, true),
        "MLP_50_50" => spec(
            Family::Mlp {
                hidden: vec![50, 50],
            },
            true,
        ),
        "GB" => spec(
            Family::GradientBoosting {
                n_estimators: 200,
                learning_rate: 0.05,
            },
            false,
        ),
        "Ada" => spec(
            Family::AdaBoost {
                n_estimators: 100,
                learning_rate: 0.5,
            },
            false,
        ),
        "Bagging" => spec(
            Family::Bagging {
                n_estimators: 100,
                sample_ratio: 0.8,
                feature_ratio: 0.8,
            },
            false,
        ),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

/// Persist a fitted model as versioned JSON.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&file)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    Ok(file.model)
}
