//! Stratified folds, binary metrics, the one-sample t-test, cross-validation
//! and report rendering.

mod cv;
mod report;
mod ttest;

pub use cv::{
    cross_validate, cross_validate_many, fold_plan, prepare_fold, repeat_seed, CvConfig, FoldCell, FoldResult, PreparedFold,
    StageError,
};
pub use report::{
    load_reference, mean_metrics, parse_reference, render_report, EvaluationReport, ModelReport, ReferenceRow,
    ReportFormat, REPORT_SCHEMA_VERSION,
};
pub use ttest::{critical_value, one_sample_ttest, TTestResult};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::models::ModelKind;
use crate::seed;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("class {label} has {count} members, fewer than k = {k}")]
    ClassTooSmall { label: Label, count: usize, k: usize },
    #[error("predicted and actual lengths differ ({predicted} vs {actual})")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("no rows to evaluate")]
    Empty,
    #[error("t-test needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("no critical-value table for alpha = {0} (available: 0.05, 0.01)")]
    UnsupportedAlpha(f64),
    #[error("unknown report format {0:?} (expected json, markdown or csv)")]
    UnknownFormat(String),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("repeat {repeat}, fold {fold}{}: {source}", model.map(|m| format!(", {}", m.display_name())).unwrap_or_default())]
    Fold {
        repeat: usize,
        fold: usize,
        model: Option<ModelKind>,
        source: StageError,
    },
    #[error("reference table: {0}")]
    Reference(String),
    #[error("report document: {0}")]
    Document(String),
}

/// Positive class is fake.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same predictions with real treated as the positive class.
    pub fn flipped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Precision, recall and F1 of the fake class.
    #[default]
    Binary,
    /// Unweighted mean of the per-class values.
    Macro,
}

pub fn confusion(predicted: &[Label], actual: &[Label]) -> Result<ConfusionMatrix, EvaluateError> {
    if predicted.len() != actual.len() {
        return Err(EvaluateError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvaluateError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (Label::Fake, Label::Fake) => cm.tp += 1,
            (Label::Fake, Label::Real) => cm.fp += 1,
            (Label::Real, Label::Fake) => cm.fn_ += 1,
            (Label::Real, Label::Real) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvaluateError> {
    metrics_with(cm, Averaging::Binary)
}

pub fn metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Metrics, EvaluateError> {
    if cm.total() == 0 {
        return Err(EvaluateError::Empty);
    }
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let per_class = |m: &ConfusionMatrix| {
        let p = ratio(m.tp, m.tp + m.fp);
        let r = ratio(m.tp, m.tp + m.fn_);
        (p, r, f1(p, r))
    };
    let (precision, recall, f1) = match averaging {
        Averaging::Binary => per_class(cm),
        Averaging::Macro => {
            let (p1, r1, f1) = per_class(cm);
            let (p0, r0, f0) = per_class(&cm.flipped());
            ((p0 + p1) / 2.0, (r0 + r1) / 2.0, (f0 + f1) / 2.0)
        }
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Test-index sets for `k` folds. Each class is shuffled with `seed` and
/// dealt round-robin, so per-fold class counts differ by at most one. The
/// fake class is dealt first, the real class continues where it stopped.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvaluateError> {
    if k < 2 {
        return Err(EvaluateError::InvalidK(k));
    }
    let mut rng = seed::rng(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for label in [Label::Fake, Label::Real] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.len() < k {
            return Err(EvaluateError::ClassTooSmall {
                label,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&x| Label::from_bool(x == 1)).collect()
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&labels(&[1, 0, 1]), &labels(&[1, 0, 1])).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (2, 1, 0, 0));
        let cm = confusion(&labels(&[0, 1, 0]), &labels(&[1, 0, 1])).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        let cm = confusion(&labels(&[1, 1, 0, 0]), &labels(&[1, 0, 1, 0])).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn), (1, 1, 1, 1));
        assert!(matches!(
            confusion(&labels(&[1]), &labels(&[1, 0])),
            Err(EvaluateError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn metrics_examples() {
        let m = metrics(&ConfusionMatrix {
            tp: 88,
            fp: 8,
            fn_: 12,
            tn: 92,
        })
        .unwrap();
        assert_eq!(m.accuracy, 0.9);
        assert!((m.precision - 0.9167).abs() < 1e-4);
        assert_eq!(m.recall, 0.88);
        assert!((m.f1 - 0.8979).abs() < 1e-4);

        let m = metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 5,
        })
        .unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));

        let m = metrics(&ConfusionMatrix {
            tp: 4,
            fp: 0,
            fn_: 0,
            tn: 6,
        })
        .unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(matches!(metrics(&ConfusionMatrix::default()), Err(EvaluateError::Empty)));
    }

    #[test]
    fn macro_averaging_is_symmetric() {
        let cm = ConfusionMatrix {
            tp: 5,
            fp: 2,
            fn_: 1,
            tn: 12,
        };
        let a = metrics_with(&cm, Averaging::Macro).unwrap();
        let b = metrics_with(&cm.flipped(), Averaging::Macro).unwrap();
        assert!((a.precision - b.precision).abs() < 1e-15);
        assert!((a.f1 - b.f1).abs() < 1e-15);
    }

    #[test]
    fn kfold_examples() {
        let l = labels(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        for fold in stratified_kfold(&l, 5, 3).unwrap() {
            assert_eq!(fold.iter().filter(|&&i| l[i] == Label::Fake).count(), 1);
            assert_eq!(fold.len(), 2);
        }
        let mut v = vec![1u8; 7];
        v.extend([0u8; 13]);
        let l = labels(&v);
        for fold in stratified_kfold(&l, 5, 9).unwrap() {
            let fake = fold.iter().filter(|&&i| l[i] == Label::Fake).count();
            assert!((1..=2).contains(&fake));
            assert!((2..=3).contains(&(fold.len() - fake)));
        }
        assert!(matches!(
            stratified_kfold(&labels(&[1, 0, 0, 0]), 2, 0),
            Err(EvaluateError::ClassTooSmall { .. })
        ));
        assert!(matches!(stratified_kfold(&l, 1, 0), Err(EvaluateError::InvalidK(1))));
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(
            fake in 2usize..40,
            real in 2usize..80,
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            prop_assume!(fake >= k && real >= k);
            let mut l = vec![Label::Fake; fake];
            l.extend(vec![Label::Real; real]);
            l.shuffle(&mut seed::rng(seed ^ 1));
            let folds = stratified_kfold(&l, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..l.len()).collect::<Vec<_>>());
            for fold in &folds {
                let f = fold.iter().filter(|&&i| l[i] == Label::Fake).count();
                prop_assert!((f as f64 - fake as f64 / k as f64).abs() < 1.0);
                prop_assert!(((fold.len() - f) as f64 - real as f64 / k as f64).abs() < 1.0);
            }
        }

        #[test]
        fn metrics_stay_in_unit_interval(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            for avg in [Averaging::Binary, Averaging::Macro] {
                let m = metrics_with(&ConfusionMatrix { tp, fp, fn_, tn }, avg).unwrap();
                for x in [m.accuracy, m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
        }
    }
}
