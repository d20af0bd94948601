//! Classical classifiers over [`CombinedVector`]s.
//!
//! Every model scores a vector with [`Classifier::decision_score`] and
//! thresholds it to a [`Label`]; exact ties always resolve to
//! [`Label::Real`].

mod container;
mod forest;
mod linear;
mod mnb;

pub use container::{read_header, ModelHeader, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use forest::{gini, train_random_forest, ForestParams, MaxFeatures, Node, RandomForest, Tree};
pub use linear::{
    logistic_gradient, logistic_objective, sigmoid, train_linear_svm, train_logreg, LinearModel,
};
pub use mnb::{train_mnb, MultinomialNb};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, TweetRecord};
use crate::preprocess::{extract_features, FeatureRow, Thresholds};
use crate::vectorize::{CombinedVector, DenseMode, Dims, VectorizeError, Vectorizer};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training data is empty")]
    EmptyData,
    #[error("multinomial naive Bayes needs nonnegative features (found {value} at feature {feature})")]
    NegativeFeature { feature: usize, value: f64 },
    #[error("non-finite feature value at row {0}")]
    NonFinite(usize),
    #[error("vector does not match model dimensions (sparse {sparse}, dense {dense})")]
    DimensionMismatch { sparse: usize, dense: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("model is bound to vectorizer {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("model file: {0}")]
    Container(String),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mnb,
    Logreg,
    LinearSvm,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::LinearSvm,
        ModelKind::RandomForest,
        ModelKind::Logreg,
        ModelKind::Mnb,
    ];

    /// Row label used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Mnb => "MNB",
            ModelKind::Logreg => "Logistic Regression",
            ModelKind::LinearSvm => "SVM",
            ModelKind::RandomForest => "Random Forest",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mnb => "mnb",
            ModelKind::Logreg => "logreg",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::RandomForest => "random_forest",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "mnb" => Some(ModelKind::Mnb),
            "logreg" => Some(ModelKind::Logreg),
            "linear_svm" | "svm" => Some(ModelKind::LinearSvm),
            "random_forest" | "forest" => Some(ModelKind::RandomForest),
            _ => None,
        }
    }

    /// MNB consumes raw (nonnegative) dense features, everything else the
    /// standardized ones.
    pub fn input_mode(self) -> DenseMode {
        match self {
            ModelKind::Mnb => DenseMode::Raw,
            _ => DenseMode::Standardized,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_alpha() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    100
}
fn default_lr0() -> f64 {
    1.0
}
fn default_c() -> f64 {
    1.0
}
fn default_trees() -> usize {
    100
}
fn default_min_leaf() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Mnb {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Logreg {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr0")]
        lr0: f64,
    },
    LinearSvm {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
    },
    RandomForest {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default)]
        max_features: MaxFeatures,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_depth: Option<usize>,
    },
}

impl ModelParams {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mnb => ModelParams::Mnb { alpha: 1.0 },
            ModelKind::Logreg => ModelParams::Logreg {
                lambda: 1e-4,
                epochs: 100,
                lr0: 1.0,
            },
            ModelKind::LinearSvm => ModelParams::LinearSvm { c: 1.0, epochs: 100 },
            ModelKind::RandomForest => ModelParams::RandomForest {
                n_trees: 100,
                max_features: MaxFeatures::Sqrt,
                min_leaf: 1,
                max_depth: None,
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Mnb { .. } => ModelKind::Mnb,
            ModelParams::Logreg { .. } => ModelKind::Logreg,
            ModelParams::LinearSvm { .. } => ModelKind::LinearSvm,
            ModelParams::RandomForest { .. } => ModelKind::RandomForest,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparameter(m.to_string()));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            ModelParams::Mnb { alpha } if !positive(alpha) => bad("alpha must be positive"),
            ModelParams::Logreg { lambda, .. } if !(lambda.is_finite() && lambda >= 0.0) => {
                bad("lambda must be nonnegative")
            }
            ModelParams::Logreg { epochs: 0, .. } | ModelParams::LinearSvm { epochs: 0, .. } => {
                bad("epochs must be at least 1")
            }
            ModelParams::Logreg { lr0, .. } if !positive(lr0) => bad("lr0 must be positive"),
            ModelParams::LinearSvm { c, .. } if !positive(c) => bad("C must be positive"),
            ModelParams::RandomForest { n_trees: 0, .. } => bad("n_trees must be at least 1"),
            ModelParams::RandomForest { min_leaf: 0, .. } => bad("min_leaf must be at least 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        ModelSpec { params, seed }
    }

    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        ModelSpec::new(ModelParams::defaults(kind), seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }
}

/// Learned parameters of one of the four model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Mnb(MultinomialNb),
    Logreg(LinearModel),
    LinearSvm(LinearModel),
    RandomForest(RandomForest),
}

pub(crate) fn check_vector(v: &CombinedVector, dims: Dims) -> Result<(), ModelError> {
    let in_range = v.sparse.iter().all(|&(j, _)| j < dims.sparse);
    if !in_range || v.dense.len() != dims.dense {
        return Err(ModelError::DimensionMismatch {
            sparse: dims.sparse,
            dense: dims.dense,
        });
    }
    Ok(())
}

pub(crate) fn check_data(data: &[CombinedVector], dims: Dims) -> Result<(), ModelError> {
    for (i, v) in data.iter().enumerate() {
        check_vector(v, dims)?;
        if v.sparse.iter().any(|(_, x)| !x.is_finite()) || v.dense.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
    }
    Ok(())
}

impl Classifier {
    pub fn train(spec: &ModelSpec, data: &[CombinedVector], dims: Dims) -> Result<Classifier, ModelError> {
        spec.params.validate()?;
        match spec.params {
            ModelParams::Mnb { alpha } => train_mnb(data, dims, alpha).map(Classifier::Mnb),
            ModelParams::Logreg { lambda, epochs, lr0 } => {
                train_logreg(data, dims, lambda, epochs, lr0, spec.seed).map(Classifier::Logreg)
            }
            ModelParams::LinearSvm { c, epochs } => {
                train_linear_svm(data, dims, c, epochs, spec.seed).map(Classifier::LinearSvm)
            }
            ModelParams::RandomForest {
                n_trees,
                max_features,
                min_leaf,
                max_depth,
            } => train_random_forest(
                data,
                dims,
                &ForestParams {
                    n_trees,
                    max_features,
                    min_leaf,
                    max_depth,
                },
                spec.seed,
            )
            .map(Classifier::RandomForest),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Mnb(_) => ModelKind::Mnb,
            Classifier::Logreg(_) => ModelKind::Logreg,
            Classifier::LinearSvm(_) => ModelKind::LinearSvm,
            Classifier::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    /// Probability of fake for MNB and logistic regression, signed margin
    /// for the SVM, fraction of trees voting fake for the forest.
    pub fn decision_score(&self, v: &CombinedVector, dims: Dims) -> Result<f64, ModelError> {
        check_vector(v, dims)?;
        Ok(match self {
            Classifier::Mnb(m) => m.probability(v, dims),
            Classifier::Logreg(m) => sigmoid(m.margin(v, dims)),
            Classifier::LinearSvm(m) => m.margin(v, dims),
            Classifier::RandomForest(f) => f.vote_fraction(v, dims),
        })
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Classifier::LinearSvm(_) => 0.0,
            _ => 0.5,
        }
    }

    pub fn predict(&self, v: &CombinedVector, dims: Dims) -> Result<Label, ModelError> {
        let score = self.decision_score(v, dims)?;
        Ok(Label::from_bool(score > self.threshold()))
    }
}

/// A classifier bound to the vectorizer (and optionally the thresholds) it
/// was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub classifier: Classifier,
    pub vectorizer: Vectorizer,
    pub vectorizer_fingerprint: String,
    pub thresholds: Option<Thresholds>,
    pub created_at: Option<String>,
}

impl TrainedModel {
    pub fn fit(
        spec: &ModelSpec,
        vectorizer: Vectorizer,
        rows: &[FeatureRow],
        thresholds: Option<Thresholds>,
    ) -> Result<TrainedModel, ModelError> {
        let data = vectorizer.transform_all(rows, spec.kind().input_mode())?;
        let classifier = Classifier::train(spec, &data, vectorizer.dims())?;
        Ok(TrainedModel {
            spec: spec.clone(),
            classifier,
            vectorizer_fingerprint: vectorizer.fingerprint(),
            vectorizer,
            thresholds,
            created_at: None,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn dims(&self) -> Dims {
        self.vectorizer.dims()
    }

    pub fn vectorize(&self, row: &FeatureRow) -> Result<CombinedVector, ModelError> {
        Ok(self.vectorizer.transform_with(row, self.kind().input_mode())?)
    }

    pub fn decision_score(&self, v: &CombinedVector) -> Result<f64, ModelError> {
        self.classifier.decision_score(v, self.dims())
    }

    pub fn predict(&self, v: &CombinedVector) -> Result<Label, ModelError> {
        self.classifier.predict(v, self.dims())
    }

    pub fn score_row(&self, row: &FeatureRow) -> Result<(Label, f64), ModelError> {
        let v = self.vectorize(row)?;
        let score = self.decision_score(&v)?;
        Ok((Label::from_bool(score > self.classifier.threshold()), score))
    }

    /// Scores a full record. Needs thresholds; without them metadata bits are
    /// computed against zero thresholds.
    pub fn score_record(&self, record: &TweetRecord) -> Result<(Label, f64), ModelError> {
        let t = self.thresholds.clone().unwrap_or(Thresholds {
            word_count_threshold: 10,
            account_age_threshold_days: 0.0,
            retweet_count_threshold: 0.0,
            fitted_on: "default".into(),
        });
        self.score_row(&extract_features(record, &t))
    }

    /// Scores bare text: no entities, unverified account, zero age and
    /// retweets.
    pub fn score_text(&self, text: &str) -> Result<(Label, f64), ModelError> {
        let now = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
        let record = TweetRecord {
            tweet_id: "0".into(),
            text: text.to_string(),
            hashtags: vec![],
            user_mentions: vec![],
            urls: vec![],
            retweet_count: 0,
            user_name: String::new(),
            user_location: String::new(),
            user_verified: false,
            account_created_at: now,
            collected_at: now,
            label: Label::Real,
            claim_kind: crate::corpus::ClaimKind::Claim,
            post_kind: crate::corpus::PostKind::Tweet,
        };
        self.score_record(&record)
    }
}
