use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{confusion, metrics_with, stratified_kfold, Averaging, ConfusionMatrix, EvaluateError, Metrics};
use crate::balance::{balance, BalanceConfig, BalanceError, BalanceOutcome};
use crate::corpus::{Label, TweetRecord};
use crate::models::{Classifier, ModelError, ModelKind, ModelSpec};
use crate::preprocess::{extract_all, fit_thresholds, FeatureRow, PreprocessConfig, PreprocessError, Thresholds};
use crate::seed::{self, Stream};
use crate::vectorize::{self, DenseMode, VectorizeError, Vectorizer, VectorizerConfig};

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evaluate(Box<EvaluateError>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub token_cap: usize,
    /// `seed` is replaced by a per-fold derived seed.
    pub balance: BalanceConfig,
    pub averaging: Averaging,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            repeats: 6,
            seed: 0,
            preprocess: PreprocessConfig::default(),
            token_cap: vectorize::DEFAULT_TOKEN_CAP,
            balance: BalanceConfig::default(),
            averaging: Averaging::Binary,
        }
    }
}

/// Everything fitted on one training split.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub thresholds: Thresholds,
    /// Balanced training rows.
    pub train: Vec<FeatureRow>,
    pub test: Vec<FeatureRow>,
    pub vectorizer: Vectorizer,
    /// Positions into the training split.
    pub balance: BalanceOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub train_size: usize,
    /// Fake rows in the balanced training split.
    pub train_fake: usize,
    pub test_size: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Fits thresholds, balancing and the vectorizer on `train_idx` only; test
/// rows are featurized with the training thresholds and never balanced.
pub fn prepare_fold(
    records: &[TweetRecord],
    train_idx: &[usize],
    test_idx: &[usize],
    cfg: &CvConfig,
    balance_seed: u64,
    tag: &str,
) -> Result<PreparedFold, StageError> {
    let train_records: Vec<TweetRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    let test_records: Vec<TweetRecord> = test_idx.iter().map(|&i| records[i].clone()).collect();
    let mut thresholds = fit_thresholds(&train_records, cfg.preprocess.word_count_threshold)?;
    thresholds.fitted_on = tag.to_string();
    let train_rows = extract_all(&train_records, &thresholds);
    let test = extract_all(&test_records, &thresholds);
    let bcfg = BalanceConfig {
        seed: balance_seed,
        ..cfg.balance.clone()
    };
    let outcome = balance(&train_rows, &bcfg)?;
    let train: Vec<FeatureRow> = outcome.kept.iter().map(|&i| train_rows[i].clone()).collect();
    let vectorizer = vectorize::fit(
        &train,
        &VectorizerConfig {
            cap: cfg.token_cap,
            include_retweet_count: cfg.preprocess.include_retweet_count,
        },
    )?;
    Ok(PreparedFold {
        thresholds,
        train,
        test,
        vectorizer,
        balance: outcome,
    })
}

fn evaluate_spec(
    spec: &ModelSpec,
    prepared: &PreparedFold,
    model_seed: u64,
    averaging: Averaging,
) -> Result<(ConfusionMatrix, Metrics), StageError> {
    let mode: DenseMode = spec.kind().input_mode();
    let train = prepared.vectorizer.transform_all(&prepared.train, mode)?;
    let test = prepared.vectorizer.transform_all(&prepared.test, mode)?;
    let dims = prepared.vectorizer.dims();
    let spec = ModelSpec {
        seed: model_seed,
        ..spec.clone()
    };
    let classifier = Classifier::train(&spec, &train, dims)?;
    let predicted = test
        .iter()
        .map(|v| classifier.predict(v, dims))
        .collect::<Result<Vec<Label>, _>>()?;
    let actual: Vec<Label> = test.iter().map(|v| v.label).collect();
    let wrap = |e| StageError::Evaluate(Box::new(e));
    let cm = confusion(&predicted, &actual).map_err(wrap)?;
    let m = metrics_with(&cm, averaging).map_err(wrap)?;
    Ok((cm, m))
}

/// One `(repeat, fold)` cell of the cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldCell {
    pub repeat: usize,
    pub fold: usize,
    /// Seed of this cell's repeat; balancing and model seeds derive from it.
    pub repeat_seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldCell {
    pub fn balance_seed(&self) -> u64 {
        seed::derive(self.repeat_seed, Stream::Balance, self.fold as u64)
    }

    pub fn model_seed(&self, spec_seed: u64) -> u64 {
        seed::derive(
            seed::derive(self.repeat_seed, Stream::Model, self.fold as u64),
            Stream::Model,
            spec_seed,
        )
    }
}

/// Seed used for repeat `r`'s fold shuffle, balancing and models.
pub fn repeat_seed(master: u64, repeat: usize) -> u64 {
    seed::derive(master, Stream::Repeat, repeat as u64)
}

/// Train/test indices of every cell, in `(repeat, fold)` order.
pub fn fold_plan(labels: &[Label], cfg: &CvConfig) -> Result<Vec<FoldCell>, EvaluateError> {
    if cfg.repeats < 1 {
        return Err(EvaluateError::NoRepeats);
    }
    let mut cells = Vec::new();
    for repeat in 0..cfg.repeats {
        let rs = repeat_seed(cfg.seed, repeat);
        let folds = stratified_kfold(labels, cfg.k, seed::derive(rs, Stream::Folds, 0))?;
        for (fold, test) in folds.into_iter().enumerate() {
            let mut in_test = vec![false; labels.len()];
            test.iter().for_each(|&j| in_test[j] = true);
            cells.push(FoldCell {
                repeat,
                fold,
                repeat_seed: rs,
                train: (0..labels.len()).filter(|&j| !in_test[j]).collect(),
                test,
            });
        }
    }
    Ok(cells)
}

/// Runs every spec over the same `repeats × k` folds. Fold preparation is
/// shared across specs; cells run in parallel and are returned in
/// `(repeat, fold)` order, one list per spec.
pub fn cross_validate_many(
    specs: &[ModelSpec],
    records: &[TweetRecord],
    cfg: &CvConfig,
) -> Result<Vec<Vec<FoldResult>>, EvaluateError> {
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let cells = fold_plan(&labels, cfg)?;
    let results: Vec<Result<Vec<FoldResult>, EvaluateError>> = cells
        .par_iter()
        .map(|cell| {
            let ctx = |model: Option<ModelKind>, source| EvaluateError::Fold {
                repeat: cell.repeat,
                fold: cell.fold,
                model,
                source,
            };
            let tag = format!("repeat {} fold {}", cell.repeat, cell.fold);
            let prepared = prepare_fold(records, &cell.train, &cell.test, cfg, cell.balance_seed(), &tag)
                .map_err(|e| ctx(None, e))?;
            specs
                .iter()
                .map(|spec| {
                    let (cm, m) = evaluate_spec(spec, &prepared, cell.model_seed(spec.seed), cfg.averaging)
                        .map_err(|e| ctx(Some(spec.kind()), e))?;
                    Ok(FoldResult {
                        repeat: cell.repeat,
                        fold: cell.fold,
                        train_size: prepared.train.len(),
                        train_fake: prepared.train.iter().filter(|r| r.label == Label::Fake).count(),
                        test_size: prepared.test.len(),
                        confusion: cm,
                        metrics: m,
                    })
                })
                .collect()
        })
        .collect();
    let mut per_spec = vec![Vec::with_capacity(results.len()); specs.len()];
    // Sequential pass so the reported error is the first in (repeat, fold) order.
    for cell in results {
        for (s, fold) in cell?.into_iter().enumerate() {
            per_spec[s].push(fold);
        }
    }
    Ok(per_spec)
}

pub fn cross_validate(spec: &ModelSpec, records: &[TweetRecord], cfg: &CvConfig) -> Result<Vec<FoldResult>, EvaluateError> {
    Ok(cross_validate_many(std::slice::from_ref(spec), records, cfg)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::BalanceMethod;
    use crate::corpus::tests::record;

    fn signal_records(n: usize) -> Vec<TweetRecord> {
        (0..n)
            .map(|i| {
                let fake = i % 4 == 0;
                let text = if fake {
                    format!("miracle cure claim {i}")
                } else {
                    format!("health agency update {i}")
                };
                record(&i.to_string(), &text, Label::from_bool(fake))
            })
            .collect()
    }

    #[test]
    fn memorized_signal_scores_perfectly() {
        let records = signal_records(80);
        // OSS would keep a single real row here: every real text is
        // redundant with the first.
        let mut cfg = CvConfig {
            repeats: 1,
            seed: 4,
            ..CvConfig::default()
        };
        cfg.balance.method = BalanceMethod::RandomUnder;
        for kind in ModelKind::ALL {
            let folds = cross_validate(&ModelSpec::default_for(kind, 1), &records, &cfg).unwrap();
            assert_eq!(folds.len(), 5);
            for f in folds {
                assert_eq!(f.metrics.accuracy, 1.0, "{kind}");
            }
        }
    }

    #[test]
    fn thirty_measures_and_determinism() {
        let records = signal_records(60);
        let cfg = CvConfig {
            seed: 17,
            balance: BalanceConfig {
                method: BalanceMethod::None,
                ..BalanceConfig::default()
            },
            ..CvConfig::default()
        };
        let spec = ModelSpec::default_for(ModelKind::Logreg, 0);
        let a = cross_validate(&spec, &records, &cfg).unwrap();
        assert_eq!(a.len(), 30);
        let order: Vec<(usize, usize)> = a.iter().map(|f| (f.repeat, f.fold)).collect();
        let expected: Vec<(usize, usize)> = (0..6).flat_map(|r| (0..5).map(move |i| (r, i))).collect();
        assert_eq!(order, expected);
        assert_eq!(a, cross_validate(&spec, &records, &cfg).unwrap());
    }

    #[test]
    fn errors_carry_fold_context() {
        let records = signal_records(40);
        let cfg = CvConfig {
            repeats: 1,
            ..CvConfig::default()
        };
        let bad = ModelSpec::new(crate::models::ModelParams::Mnb { alpha: -1.0 }, 0);
        let err = cross_validate(&bad, &records, &cfg).unwrap_err();
        assert!(matches!(
            err,
            EvaluateError::Fold {
                repeat: 0,
                fold: 0,
                model: Some(ModelKind::Mnb),
                ..
            }
        ));
        assert!(err.to_string().starts_with("repeat 0, fold 0, MNB"));
    }
}
