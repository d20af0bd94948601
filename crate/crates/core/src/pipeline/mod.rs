//! Stage runner behind the `infodemic` binary.
//!
//! Every stage reads the artifacts of the stage before it from the output
//! directory and writes its own artifact plus a `<stage>.manifest.json`
//! recording input and output hashes, a configuration snapshot and the seeds
//! it used. Stage order is hydrate, prepare, balance, train; `evaluate` reruns
//! the chain per fold from the hydrated dataset (or straight from the raw
//! inputs when no dataset has been written yet).

mod config;
mod manifest;
mod stages;

pub use config::{EvaluateSettings, HydrationKind, HydrationSettings, Paths, PipelineConfig, VectorizeSettings};
pub use manifest::{sha256_file, verify_manifest, FileHash, Manifest};
pub use stages::{
    cmd_balance, cmd_evaluate, cmd_hydrate, cmd_inspect, cmd_predict, cmd_prepare, cmd_report, cmd_train, Artifacts,
    Prediction, StageSummary,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::balance::BalanceError;
use crate::corpus::CorpusError;
use crate::evaluate::{EvaluateError, StageError};
use crate::models::ModelError;
use crate::preprocess::PreprocessError;
use crate::vectorize::VectorizeError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing {}; run `infodemic {producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("writing {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
}

fn model_exit_code(e: &ModelError) -> i32 {
    match e {
        ModelError::InvalidHyperparameter(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

impl PipelineError {
    /// 1 usage or configuration, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingArtifact { .. } => EXIT_USAGE,
            PipelineError::Output { .. } => EXIT_INTERNAL,
            PipelineError::Model(e) => model_exit_code(e),
            PipelineError::Evaluate(EvaluateError::UnknownFormat(_) | EvaluateError::UnsupportedAlpha(_)) => {
                EXIT_USAGE
            }
            PipelineError::Evaluate(EvaluateError::Fold {
                source: StageError::Model(e),
                ..
            }) => model_exit_code(e),
            PipelineError::Balance(BalanceError::InvalidFraction(_)) => EXIT_USAGE,
            PipelineError::Preprocess(PreprocessError::InvalidWordCountThreshold) => EXIT_USAGE,
            PipelineError::Vectorize(VectorizeError::InvalidCap) => EXIT_USAGE,
            PipelineError::Corpus(CorpusError::MissingCredential) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}
