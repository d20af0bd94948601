use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Manifest, PipelineConfig, PipelineError};
use crate::balance::{balance, read_balance_csv, write_balance_csv};
use crate::corpus::{
    hydrate, ingest, load_label_index, read_records, summarize, write_records, Dataset, DistributionTable,
    HydrationConfig, HydrationMode, Label, LiveConfig, RejectedRow, TweetRecord,
};
use crate::evaluate::{
    cross_validate_many, load_reference, one_sample_ttest, render_report, EvaluationReport, ModelReport,
    ReportFormat,
};
use crate::models::{read_header, ModelHeader, ModelKind, TrainedModel};
use crate::pipeline::config::HydrationKind;
use crate::preprocess::{extract_all, fit_thresholds, read_feature_csv, write_feature_csv, FeatureRow, Thresholds};
use crate::seed::{self, Stream};
use crate::vectorize::{self, VectorizerConfig};

/// File names inside the output directory.
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub const DATASET: &'static str = "dataset.jsonl";
    pub const HYDRATE_SUMMARY: &'static str = "hydrate.json";
    pub const DISTRIBUTION: &'static str = "distribution.md";
    pub const FEATURES: &'static str = "features.csv";
    pub const THRESHOLDS: &'static str = "thresholds.json";
    pub const BALANCE: &'static str = "balance.csv";
    pub const VECTORIZER: &'static str = "models/vectorizer.json";
    pub const REPORT_JSON: &'static str = "report.json";
    pub const REPORT_MD: &'static str = "report.md";
    pub const FOLDS_CSV: &'static str = "folds.csv";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn model_name(kind: ModelKind) -> String {
        format!("models/{}.model", kind.as_str())
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.dir.join(format!("{command}.manifest.json"))
    }

    fn require(&self, name: &str, producer: &'static str) -> Result<PathBuf, PipelineError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingArtifact { path: p, producer })
        }
    }
}

/// What a command did, for the terminal.
#[derive(Debug, Clone, Default)]
pub struct StageSummary {
    pub lines: Vec<String>,
    pub outputs: Vec<PathBuf>,
    /// Set when artifacts were written but some input could not be processed
    /// (for example hydration batches that failed after all retries).
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HydrateSummary {
    provenance: String,
    index_entries: usize,
    index_rejects: Vec<RejectedRow>,
    index_duplicate_ids: Vec<String>,
    not_found: Vec<String>,
    failed: Vec<String>,
    errors: Vec<String>,
    requests: usize,
    duplicates_dropped: usize,
    missing_dropped: usize,
    records: usize,
    distribution: DistributionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellCount {
    label: Label,
    claim_kind: crate::corpus::ClaimKind,
    post_kind: crate::corpus::PostKind,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DistributionSummary {
    total: usize,
    fake: usize,
    real: usize,
    imbalance_ratio: (f64, f64),
    cells: Vec<CellCount>,
}

impl From<&DistributionTable> for DistributionSummary {
    fn from(t: &DistributionTable) -> Self {
        DistributionSummary {
            total: t.total,
            fake: t.label_total(Label::Fake),
            real: t.label_total(Label::Real),
            imbalance_ratio: t.imbalance_ratio,
            cells: t
                .counts
                .iter()
                .map(|(c, &count)| CellCount {
                    label: c.label,
                    claim_kind: c.claim_kind,
                    post_kind: c.post_kind,
                    count,
                })
                .collect(),
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|source| PipelineError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn create_file(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| PipelineError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

struct Hydrated {
    dataset: Dataset,
    summary: HydrateSummary,
    inputs: Vec<PathBuf>,
}

fn hydrate_inputs(cfg: &PipelineConfig) -> Result<Hydrated, PipelineError> {
    let index_path = cfg.input_path("index", &cfg.paths.index)?;
    let (mode, mut inputs, source) = match cfg.hydration.mode {
        HydrationKind::Fixture => {
            let fixture = cfg.input_path("fixture", &cfg.paths.fixture)?;
            let source = format!(
                "fixture {} (sha256 {})",
                file_label(&fixture),
                super::sha256_file(&fixture)?
            );
            (HydrationMode::Fixture(fixture.clone()), vec![fixture], source)
        }
        HydrationKind::Live => {
            let mut live = LiveConfig::from_env(Utc::now());
            live.endpoint = cfg.hydration.endpoint.clone();
            live.parallelism = cfg.hydration.parallelism;
            live.max_retries = cfg.hydration.max_retries;
            let source = format!("live lookup at {}", live.endpoint);
            (HydrationMode::Live(live), vec![], source)
        }
    };
    let index = load_label_index(&index_path)?;
    let hydration = hydrate(&index, &HydrationConfig { mode })?;
    let ingested = ingest(hydration.dataset.records);
    let provenance = format!(
        "index {} (sha256 {}), {source}",
        file_label(&index_path),
        super::sha256_file(&index_path)?
    );
    let mut dataset = ingested.dataset;
    dataset.provenance = provenance.clone();
    let table = summarize(&dataset);
    inputs.insert(0, index_path);
    Ok(Hydrated {
        summary: HydrateSummary {
            provenance,
            index_entries: index.len(),
            index_rejects: index.rejects.clone(),
            index_duplicate_ids: index.duplicate_ids.clone(),
            not_found: hydration.not_found,
            failed: hydration.failed,
            errors: hydration.errors,
            requests: hydration.requests,
            duplicates_dropped: ingested.duplicates,
            missing_dropped: ingested.missing,
            records: dataset.len(),
            distribution: (&table).into(),
        },
        dataset,
        inputs,
    })
}

/// Loads the label index, hydrates it and writes the cleaned dataset with
/// its distribution table.
pub fn cmd_hydrate(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    cfg.validate()?;
    let art = Artifacts::new(cfg.out_dir());
    let h = hydrate_inputs(cfg)?;
    create_dir(&art.dir)?;
    let dataset_path = art.path(Artifacts::DATASET);
    let mut out = create_file(&dataset_path)?;
    write_records(&mut out, &h.dataset.records).map_err(|e| output_error(&dataset_path, e))?;
    drop(out);
    write_file(&art.path(Artifacts::HYDRATE_SUMMARY), json_pretty(&h.summary))?;
    let table = summarize(&h.dataset);
    let (fake, real) = table.imbalance_ratio;
    write_file(
        &art.path(Artifacts::DISTRIBUTION),
        format!("{}\nFake : real = {fake}:{real}\n", table.to_markdown()),
    )?;

    let mut m = Manifest::new("hydrate", cfg.snapshot());
    for p in &h.inputs {
        m.input(p)?;
    }
    for name in [Artifacts::DATASET, Artifacts::HYDRATE_SUMMARY, Artifacts::DISTRIBUTION] {
        m.output(&art.dir, Path::new(name))?;
    }
    m.write(&art.manifest("hydrate"))?;

    let s = &h.summary;
    let mut lines = vec![
        format!(
            "hydrated {} of {} index entries ({} rejected rows, {} not found, {} failed)",
            s.records,
            s.index_entries,
            s.index_rejects.len(),
            s.not_found.len(),
            s.failed.len()
        ),
        format!(
            "dropped {} duplicates and {} empty records; fake:real = {fake}:{real}",
            s.duplicates_dropped, s.missing_dropped
        ),
    ];
    lines.extend(s.errors.iter().map(|e| format!("error: {e}")));
    Ok(StageSummary {
        lines,
        outputs: vec![dataset_path],
        incomplete: !s.failed.is_empty(),
    })
}

fn load_dataset(art: &Artifacts) -> Result<(Vec<TweetRecord>, String, PathBuf), PipelineError> {
    let path = art.require(Artifacts::DATASET, "hydrate")?;
    let records = read_records(&path)?;
    let summary_path = art.path(Artifacts::HYDRATE_SUMMARY);
    let provenance = std::fs::read_to_string(&summary_path)
        .ok()
        .and_then(|t| serde_json::from_str::<HydrateSummary>(&t).ok())
        .map(|s| s.provenance)
        .unwrap_or_else(|| format!("dataset sha256 {}", super::sha256_file(&path).unwrap_or_default()));
    Ok((records, provenance, path))
}

/// Fits thresholds on the whole hydrated dataset and writes the feature
/// table. Evaluation refits thresholds per training fold instead.
pub fn cmd_prepare(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    cfg.validate()?;
    let art = Artifacts::new(cfg.out_dir());
    let (records, _, dataset_path) = load_dataset(&art)?;
    let mut thresholds = fit_thresholds(&records, cfg.preprocess.word_count_threshold)?;
    thresholds.fitted_on = format!("{} ({} records)", Artifacts::DATASET, records.len());
    let rows = extract_all(&records, &thresholds);

    let features_path = art.path(Artifacts::FEATURES);
    let out = create_file(&features_path)?;
    write_feature_csv(out, &rows).map_err(|e| output_error(&features_path, e))?;
    write_file(&art.path(Artifacts::THRESHOLDS), json_pretty(&thresholds))?;

    let mut m = Manifest::new("prepare", cfg.snapshot());
    m.input(&dataset_path)?;
    m.output(&art.dir, Path::new(Artifacts::FEATURES))?;
    m.output(&art.dir, Path::new(Artifacts::THRESHOLDS))?;
    m.write(&art.manifest("prepare"))?;
    Ok(StageSummary {
        lines: vec![format!(
            "{} feature rows; account age threshold {} days, retweet threshold {}",
            rows.len(),
            thresholds.account_age_threshold_days,
            thresholds.retweet_count_threshold
        )],
        outputs: vec![features_path],
        incomplete: false,
    })
}

fn load_features(art: &Artifacts) -> Result<(Vec<FeatureRow>, PathBuf), PipelineError> {
    let path = art.require(Artifacts::FEATURES, "prepare")?;
    let file = File::open(&path).map_err(|e| input_error(&path, e))?;
    let rows = read_feature_csv(file).map_err(|e| input_error(&path, e))?;
    Ok((rows, path))
}

fn class_counts<'a>(labels: impl Iterator<Item = &'a Label>) -> (usize, usize) {
    labels.fold((0, 0), |(f, r), l| if *l == Label::Fake { (f + 1, r) } else { (f, r + 1) })
}

/// Rebalances the full feature table and writes the kept/removed audit file.
pub fn cmd_balance(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    cfg.validate()?;
    let art = Artifacts::new(cfg.out_dir());
    let (rows, features_path) = load_features(&art)?;
    let bcfg = cfg.balance_config();
    let outcome = balance(&rows, &bcfg)?;
    let path = art.path(Artifacts::BALANCE);
    let out = create_file(&path)?;
    write_balance_csv(out, &outcome).map_err(|e| output_error(&path, e))?;

    let mut m = Manifest::new("balance", cfg.snapshot());
    m.input(&features_path)?;
    m.output(&art.dir, Path::new(Artifacts::BALANCE))?;
    m.seeds.push(("balance".into(), bcfg.seed));
    m.write(&art.manifest("balance"))?;

    let (before_f, before_r) = class_counts(rows.iter().map(|r| &r.label));
    let (after_f, after_r) = class_counts(outcome.kept.iter().map(|&i| &rows[i].label));
    Ok(StageSummary {
        lines: vec![format!(
            "fake/real {before_f}/{before_r} -> {after_f}/{after_r} ({} rows kept)",
            outcome.kept.len()
        )],
        outputs: vec![path],
        incomplete: false,
    })
}

/// `SOURCE_DATE_EPOCH` when set, so that rebuilt models stay byte-identical.
fn creation_time() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH").ok()?.parse().ok()?;
    DateTime::<Utc>::from_timestamp(secs, 0).map(|t| t.to_rfc3339())
}

/// Fits the vectorizer on the balanced rows and trains every configured
/// model on them.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<StageSummary, PipelineError> {
    cfg.validate()?;
    let art = Artifacts::new(cfg.out_dir());
    let (rows, features_path) = load_features(&art)?;
    let balance_path = art.require(Artifacts::BALANCE, "balance")?;
    let thresholds_path = art.require(Artifacts::THRESHOLDS, "prepare")?;
    let outcome = read_balance_csv(File::open(&balance_path).map_err(|e| input_error(&balance_path, e))?)
        .map_err(|e| input_error(&balance_path, e))?;
    if let Some(&bad) = outcome.kept.iter().find(|&&i| i >= rows.len()) {
        return Err(input_error(
            &balance_path,
            format!("row {bad} is out of range for {} feature rows", rows.len()),
        ));
    }
    let thresholds: Thresholds = serde_json::from_str(
        &std::fs::read_to_string(&thresholds_path).map_err(|e| input_error(&thresholds_path, e))?,
    )
    .map_err(|e| input_error(&thresholds_path, e))?;
    let train: Vec<FeatureRow> = outcome.kept.iter().map(|&i| rows[i].clone()).collect();
    let vectorizer = vectorize::fit(
        &train,
        &VectorizerConfig {
            cap: cfg.vectorize.token_cap,
            include_retweet_count: cfg.preprocess.include_retweet_count,
        },
    )?;
    write_file(&art.path(Artifacts::VECTORIZER), vectorizer.to_json())?;

    let mut m = Manifest::new("train", cfg.snapshot());
    m.input(&features_path)?;
    m.input(&balance_path)?;
    m.input(&thresholds_path)?;
    m.output(&art.dir, Path::new(Artifacts::VECTORIZER))?;
    let mut lines = vec![format!(
        "vectorizer: {} terms, {} numeric features",
        vectorizer.vocabulary.len(),
        vectorizer.numeric_stats.len()
    )];
    let mut outputs = vec![];
    for spec in &cfg.models {
        let mut spec = spec.clone();
        spec.seed = seed::derive(cfg.seed, Stream::Model, spec.seed);
        let mut model = TrainedModel::fit(&spec, vectorizer.clone(), &train, Some(thresholds.clone()))?;
        model.created_at = creation_time();
        let name = Artifacts::model_name(spec.kind());
        let path = art.path(&name);
        write_file(&path, model.to_bytes())?;
        m.output(&art.dir, Path::new(&name))?;
        m.seeds.push((format!("model:{}", spec.kind()), spec.seed));
        lines.push(format!("trained {} -> {}", spec.kind().display_name(), path.display()));
        outputs.push(path);
    }
    m.write(&art.manifest("train"))?;
    Ok(StageSummary {
        lines,
        outputs,
        incomplete: false,
    })
}

/// Builds the evaluation report: repeated stratified cross-validation of
/// every configured model, refitting thresholds, balancing and the
/// vectorizer inside each training fold.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<(EvaluationReport, StageSummary), PipelineError> {
    cfg.validate()?;
    let art = Artifacts::new(cfg.out_dir());
    let mut manifest = Manifest::new("evaluate", cfg.snapshot());
    let (records, provenance) = if art.path(Artifacts::DATASET).is_file() {
        let (records, provenance, path) = load_dataset(&art)?;
        manifest.input(&path)?;
        (records, provenance)
    } else {
        let h = hydrate_inputs(cfg)?;
        for p in &h.inputs {
            manifest.input(p)?;
        }
        (h.dataset.records, h.dataset.provenance)
    };
    let reference = match &cfg.paths.reference {
        Some(_) => {
            let p = cfg.input_path("reference", &cfg.paths.reference)?;
            manifest.input(&p)?;
            load_reference(&p)?
        }
        None => vec![],
    };
    let external = match &cfg.paths.external {
        Some(_) => {
            let p = cfg.input_path("external", &cfg.paths.external)?;
            manifest.input(&p)?;
            load_reference(&p)?
        }
        None => vec![],
    };

    let cv = cfg.cv_config();
    let per_model = cross_validate_many(&cfg.models, &records, &cv)?;
    let mut report = EvaluationReport::new(provenance, cfg.snapshot());
    for (spec, folds) in cfg.models.iter().zip(per_model) {
        report.models.push(ModelReport::from_folds(spec, folds));
    }
    for row in external {
        report.models.push(ModelReport::external(row.model, row.metrics));
    }
    report.reference = reference;
    if let Some(m) = report.model(cfg.evaluate.ttest_model) {
        let t = one_sample_ttest(&m.accuracies(), cfg.evaluate.mu0, cfg.evaluate.alpha)?;
        report.ttest_model = Some(m.model.clone());
        report.ttest = Some(t);
    }
    for r in 0..cv.repeats {
        let rs = crate::evaluate::repeat_seed(cv.seed, r);
        manifest.seeds.push((format!("repeat:{r}"), rs));
    }

    create_dir(&art.dir)?;
    let md = render_report(&report, ReportFormat::Markdown)?;
    write_file(&art.path(Artifacts::REPORT_JSON), render_report(&report, ReportFormat::Json)?)?;
    write_file(&art.path(Artifacts::REPORT_MD), &md)?;
    write_file(&art.path(Artifacts::FOLDS_CSV), render_report(&report, ReportFormat::Csv)?)?;
    for name in [Artifacts::REPORT_JSON, Artifacts::REPORT_MD, Artifacts::FOLDS_CSV] {
        manifest.output(&art.dir, Path::new(name))?;
    }
    manifest.write(&art.manifest("evaluate"))?;
    let summary = StageSummary {
        lines: md.lines().map(str::to_string).collect(),
        outputs: vec![art.path(Artifacts::REPORT_JSON), art.path(Artifacts::REPORT_MD)],
        incomplete: false,
    };
    Ok((report, summary))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

fn load_model(path: &Path) -> Result<TrainedModel, PipelineError> {
    if !path.is_file() {
        return Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            producer: "train",
        });
    }
    let bytes = std::fs::read(path).map_err(|e| input_error(path, e))?;
    Ok(TrainedModel::from_bytes(&bytes)?)
}

/// Scores bare texts with a trained model.
pub fn cmd_predict(model_path: &Path, texts: &[String]) -> Result<Vec<Prediction>, PipelineError> {
    let model = load_model(model_path)?;
    texts
        .iter()
        .map(|t| {
            let (label, score) = model.score_text(t)?;
            Ok(Prediction { label, score })
        })
        .collect()
}

pub fn cmd_inspect(model_path: &Path) -> Result<ModelHeader, PipelineError> {
    if !model_path.is_file() {
        return Err(PipelineError::MissingArtifact {
            path: model_path.to_path_buf(),
            producer: "train",
        });
    }
    let file = File::open(model_path).map_err(|e| input_error(model_path, e))?;
    Ok(read_header(std::io::BufReader::new(file))?)
}

/// Re-renders an existing `report.json`.
pub fn cmd_report(cfg: &PipelineConfig, format: ReportFormat) -> Result<String, PipelineError> {
    let art = Artifacts::new(cfg.out_dir());
    let path = art.require(Artifacts::REPORT_JSON, "evaluate")?;
    let text = std::fs::read_to_string(&path).map_err(|e| input_error(&path, e))?;
    let report = EvaluationReport::from_json(&text)?;
    Ok(render_report(&report, format)?)
}
