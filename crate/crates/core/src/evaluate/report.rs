use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvaluateError, FoldResult, Metrics, TTestResult};
use crate::models::{ModelKind, ModelSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One row of the results table. Rows without `kind` carry externally
/// supplied results and have no folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    #[serde(default)]
    pub kind: Option<ModelKind>,
    #[serde(default)]
    pub spec: Option<ModelSpec>,
    #[serde(default)]
    pub folds: Vec<FoldResult>,
    pub mean: Metrics,
    /// Mean accuracy of always predicting each training split's majority
    /// class.
    #[serde(default)]
    pub majority_baseline_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub model: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub provenance: String,
    /// Snapshot of the configuration that produced the report.
    pub config: serde_json::Value,
    pub models: Vec<ModelReport>,
    /// Model whose fold accuracies were tested, and the outcome.
    #[serde(default)]
    pub ttest_model: Option<String>,
    #[serde(default)]
    pub ttest: Option<TTestResult>,
    /// Published means to compare against, if supplied.
    #[serde(default)]
    pub reference: Vec<ReferenceRow>,
}

/// Arithmetic mean of each metric over the folds.
pub fn mean_metrics(folds: &[FoldResult]) -> Metrics {
    let n = folds.len() as f64;
    let sum = |f: fn(&Metrics) -> f64| folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    Metrics {
        accuracy: sum(|m| m.accuracy),
        precision: sum(|m| m.precision),
        recall: sum(|m| m.recall),
        f1: sum(|m| m.f1),
    }
}

fn majority_baseline(folds: &[FoldResult]) -> f64 {
    let per_fold = folds.iter().map(|f| {
        let cm = &f.confusion;
        let fake = cm.tp + cm.fn_;
        let real = cm.tn + cm.fp;
        // ties go to real
        let predicted_fake = 2 * f.train_fake > f.train_size;
        (if predicted_fake { fake } else { real }) as f64 / cm.total() as f64
    });
    per_fold.sum::<f64>() / folds.len() as f64
}

impl ModelReport {
    pub fn from_folds(spec: &ModelSpec, folds: Vec<FoldResult>) -> ModelReport {
        let kind = spec.kind();
        ModelReport {
            model: kind.display_name().to_string(),
            kind: Some(kind),
            spec: Some(spec.clone()),
            mean: mean_metrics(&folds),
            majority_baseline_accuracy: (!folds.is_empty()).then(|| majority_baseline(&folds)),
            folds,
        }
    }

    pub fn external(model: impl Into<String>, mean: Metrics) -> ModelReport {
        ModelReport {
            model: model.into(),
            kind: None,
            spec: None,
            folds: vec![],
            mean,
            majority_baseline_accuracy: None,
        }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.metrics.accuracy).collect()
    }
}

impl EvaluationReport {
    pub fn new(provenance: impl Into<String>, config: serde_json::Value) -> Self {
        EvaluationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            provenance: provenance.into(),
            config,
            models: vec![],
            ttest_model: None,
            ttest: None,
            reference: vec![],
        }
    }

    pub fn model(&self, kind: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.kind == Some(kind))
    }

    pub fn from_json(s: &str) -> Result<Self, EvaluateError> {
        let r: EvaluationReport = serde_json::from_str(s).map_err(|e| EvaluateError::Document(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(EvaluateError::Document(format!(
                "unsupported schema version {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = EvaluateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(EvaluateError::UnknownFormat(other.to_string())),
        }
    }
}

fn metric_cells(m: &Metrics) -> String {
    format!("{:.2} | {:.2} | {:.2} | {:.2}", m.accuracy, m.precision, m.recall, m.f1)
}

fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("| Model | Accuracy | Precision | Recall | F1-Score |\n");
    out.push_str("|---|---|---|---|---|\n");
    for m in &report.models {
        writeln!(out, "| {} | {} |", m.model, metric_cells(&m.mean)).unwrap();
    }
    let external: Vec<&str> = report
        .models
        .iter()
        .filter(|m| m.kind.is_none())
        .map(|m| m.model.as_str())
        .collect();
    if !external.is_empty() {
        writeln!(out, "\nExternally supplied rows: {}.", external.join(", ")).unwrap();
    }
    let folds: Vec<String> = report
        .models
        .iter()
        .filter(|m| !m.folds.is_empty())
        .map(|m| {
            let base = m
                .majority_baseline_accuracy
                .map(|b| format!(", majority-class baseline accuracy {b:.4}"))
                .unwrap_or_default();
            format!("- {}: {} folds{base}", m.model, m.folds.len())
        })
        .collect();
    if !folds.is_empty() {
        writeln!(out, "\nMeans over cross-validation folds:\n{}", folds.join("\n")).unwrap();
    }
    if !report.reference.is_empty() {
        out.push_str(
            "\n| Model | Ref. Accuracy | Ref. Precision | Ref. Recall | Ref. F1-Score \
             | Accuracy Δ | Precision Δ | Recall Δ | F1-Score Δ |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for r in &report.reference {
            let Some(ours) = report.models.iter().find(|m| m.model == r.model && m.kind.is_some()) else {
                continue;
            };
            let d = |a: f64, b: f64| format!("{:+.2}", a - b);
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                r.model,
                metric_cells(&r.metrics),
                d(ours.mean.accuracy, r.metrics.accuracy),
                d(ours.mean.precision, r.metrics.precision),
                d(ours.mean.recall, r.metrics.recall),
                d(ours.mean.f1, r.metrics.f1),
            )
            .unwrap();
        }
    }
    if let (Some(model), Some(t)) = (&report.ttest_model, &report.ttest) {
        writeln!(
            out,
            "\nOne-sample t-test on {model} accuracy: n = {}, mean = {:.4}, sd = {:.4}, mu0 = {}, t = {:.4}, \
             critical value = {} (alpha = {}), {}.",
            t.n,
            t.sample_mean,
            t.sample_stddev,
            t.mu0,
            t.t_statistic,
            t.critical_value,
            t.alpha,
            if t.reject_null { "H0 rejected" } else { "H0 accepted" }
        )
        .unwrap();
    }
    out
}

fn render_csv(report: &EvaluationReport) -> Result<String, EvaluateError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| EvaluateError::Document(e.to_string());
    w.write_record([
        "model", "repeat", "fold", "train_size", "test_size", "accuracy", "precision", "recall", "f1", "tp", "fp",
        "fn", "tn",
    ])
    .map_err(io)?;
    for m in &report.models {
        for f in &m.folds {
            let c = &f.confusion;
            let x = &f.metrics;
            w.write_record([
                m.model.clone(),
                f.repeat.to_string(),
                f.fold.to_string(),
                f.train_size.to_string(),
                f.test_size.to_string(),
                x.accuracy.to_string(),
                x.precision.to_string(),
                x.recall.to_string(),
                x.f1.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| EvaluateError::Document(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String, EvaluateError> {
    if report.models.is_empty() {
        return Err(EvaluateError::Empty);
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| EvaluateError::Document(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Markdown => Ok(render_markdown(report)),
        ReportFormat::Csv => render_csv(report),
    }
}

#[derive(Deserialize)]
struct ReferenceCsvRow {
    model: String,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

/// Reads a `model,accuracy,precision,recall,f1` table of reference means.
pub fn parse_reference<R: std::io::Read>(input: R) -> Result<Vec<ReferenceRow>, EvaluateError> {
    csv::Reader::from_reader(input)
        .deserialize::<ReferenceCsvRow>()
        .map(|row| {
            let r = row.map_err(|e| EvaluateError::Reference(e.to_string()))?;
            Ok(ReferenceRow {
                model: r.model,
                metrics: Metrics {
                    accuracy: r.accuracy,
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                },
            })
        })
        .collect()
}

pub fn load_reference(path: &Path) -> Result<Vec<ReferenceRow>, EvaluateError> {
    let file = std::fs::File::open(path).map_err(|e| EvaluateError::Reference(format!("{}: {e}", path.display())))?;
    parse_reference(file)
}
