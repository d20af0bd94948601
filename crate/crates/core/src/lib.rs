//! Fake-news detection for labeled tweet corpora.
//!
//! The crate follows the pipeline order used by the `infodemic` binary:
//!
//! 1. [`corpus`]: load label indexes, hydrate tweet ids into records, clean
//!    out duplicates and empty rows, summarize the class distribution.
//! 2. [`preprocess`]: assemble and clean tweet text, binarize metadata into
//!    [`preprocess::FeatureRow`]s.
//! 3. [`balance`]: one-sided selection plus ratio enforcement on training rows.
//! 4. [`vectorize`]: capped-vocabulary TF-IDF and standardized numeric features.
//! 5. [`models`]: multinomial naive Bayes, logistic regression, linear SVM and
//!    random forest.
//! 6. [`evaluate`]: stratified k-fold cross-validation, metrics, the one-sample
//!    t-test and report rendering.
//!
//! [`pipeline`] ties the stages together behind a single TOML configuration.

pub mod balance;
pub mod corpus;
pub mod evaluate;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod synthetic;
pub mod vectorize;

use thiserror::Error;

/// Top-level error, wrapping each stage's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Balance(#[from] balance::BalanceError),
    #[error(transparent)]
    Vectorize(#[from] vectorize::VectorizeError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Evaluate(#[from] evaluate::EvaluateError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
