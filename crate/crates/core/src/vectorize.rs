//! Capped-vocabulary TF-IDF over `derived_text` plus standardized numeric
//! features.
//!
//! Conventions:
//! - vocabulary: top `cap` terms by total corpus term frequency, ties broken
//!   lexicographically; column ids follow that ranking.
//! - `idf = ln((1 + N) / (1 + df)) + 1`.
//! - document weights are raw counts times idf, L2-normalized.
//! - dense features use the population standard deviation; zero-variance
//!   features map to 0.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Label;
use crate::preprocess::{numeric_feature_names, FeatureRow};

pub const VECTORIZER_FORMAT: &str = "infodemic-vectorizer";
pub const VECTORIZER_VERSION: u32 = 1;
pub const DEFAULT_TOKEN_CAP: usize = 5000;

#[derive(Debug, Error, PartialEq)]
pub enum VectorizeError {
    #[error("cannot fit a vectorizer on an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary cap must be at least 1")]
    InvalidCap,
    #[error("vectorizer is not fitted")]
    NotFitted,
    #[error("unsupported vectorizer document: {0}")]
    BadDocument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub term: String,
    pub corpus_term_frequency: u64,
    pub document_frequency: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: Vec<TermStats>,
    pub cap: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn new(terms: Vec<TermStats>, cap: usize) -> Self {
        let mut v = Vocabulary {
            terms,
            cap,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.term.clone(), i))
            .collect();
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseMode {
    Standardized,
    /// Raw binary values, for models that need nonnegative inputs.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub cap: usize,
    pub include_retweet_count: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            cap: DEFAULT_TOKEN_CAP,
            include_retweet_count: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    pub format: String,
    pub version: u32,
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub numeric_names: Vec<String>,
    pub numeric_stats: Vec<NumericStats>,
    pub include_retweet_count: bool,
    pub documents: usize,
    pub fitted: bool,
}

/// Sparse TF-IDF block plus dense numeric block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedVector {
    /// `(column, weight)` sorted by column.
    pub sparse: Vec<(usize, f64)>,
    pub dense: Vec<f64>,
    pub label: Label,
}

impl CombinedVector {
    /// Nonzero entries over the combined index space, dense block offset by
    /// `sparse_dim`.
    pub fn iter_features(&self, sparse_dim: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.sparse.iter().copied().chain(
            self.dense
                .iter()
                .enumerate()
                .map(move |(k, &v)| (sparse_dim + k, v)),
        )
    }

    pub fn sparse_norm(&self) -> f64 {
        self.sparse.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Feature dimensions a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub sparse: usize,
    pub dense: usize,
}

impl Dims {
    pub fn total(&self) -> usize {
        self.sparse + self.dense
    }
}

/// Fits vocabulary, idf and numeric statistics on training rows.
pub fn fit(train_rows: &[FeatureRow], cfg: &VectorizerConfig) -> Result<Vectorizer, VectorizeError> {
    if cfg.cap < 1 {
        return Err(VectorizeError::InvalidCap);
    }
    if train_rows.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    // term -> (tf, df); BTreeMap keeps the reduction order-independent.
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for row in train_rows {
        let mut doc: BTreeMap<&str, u64> = BTreeMap::new();
        for tok in row.tokens() {
            *doc.entry(tok).or_insert(0) += 1;
        }
        for (tok, n) in doc {
            let e = counts.entry(tok).or_insert((0, 0));
            e.0 += n;
            e.1 += 1;
        }
    }
    let mut ranked: Vec<TermStats> = counts
        .into_iter()
        .map(|(term, (tf, df))| TermStats {
            term: term.to_string(),
            corpus_term_frequency: tf,
            document_frequency: df,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.corpus_term_frequency
            .cmp(&a.corpus_term_frequency)
            .then_with(|| a.term.cmp(&b.term))
    });
    ranked.truncate(cfg.cap);

    let n = train_rows.len() as f64;
    let idf = ranked
        .iter()
        .map(|t| ((1.0 + n) / (1.0 + t.document_frequency as f64)).ln() + 1.0)
        .collect();

    let names = numeric_feature_names(cfg.include_retweet_count);
    let mut sums = vec![0.0; names.len()];
    let mut sq = vec![0.0; names.len()];
    for row in train_rows {
        for (k, x) in row.numeric_features(cfg.include_retweet_count).into_iter().enumerate() {
            sums[k] += x;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    for row in train_rows {
        for (k, x) in row.numeric_features(cfg.include_retweet_count).into_iter().enumerate() {
            sq[k] += (x - means[k]) * (x - means[k]);
        }
    }
    let numeric_stats = means
        .iter()
        .zip(&sq)
        .map(|(&mean, &s)| NumericStats {
            mean,
            stddev: (s / n).sqrt(),
        })
        .collect();

    Ok(Vectorizer {
        format: VECTORIZER_FORMAT.to_string(),
        version: VECTORIZER_VERSION,
        vocabulary: Vocabulary::new(ranked, cfg.cap),
        idf,
        numeric_names: names.into_iter().map(str::to_string).collect(),
        numeric_stats,
        include_retweet_count: cfg.include_retweet_count,
        documents: train_rows.len(),
        fitted: true,
    })
}

impl Vectorizer {
    pub fn dims(&self) -> Dims {
        Dims {
            sparse: self.vocabulary.len(),
            dense: self.numeric_stats.len(),
        }
    }

    pub fn transform(&self, row: &FeatureRow) -> Result<CombinedVector, VectorizeError> {
        self.transform_with(row, DenseMode::Standardized)
    }

    pub fn transform_with(&self, row: &FeatureRow, mode: DenseMode) -> Result<CombinedVector, VectorizeError> {
        if !self.fitted {
            return Err(VectorizeError::NotFitted);
        }
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in row.tokens() {
            if let Some(j) = self.vocabulary.column(tok) {
                *tf.entry(j).or_insert(0.0) += 1.0;
            }
        }
        let mut sparse: Vec<(usize, f64)> = tf.into_iter().map(|(j, c)| (j, c * self.idf[j])).collect();
        let norm = sparse.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            sparse.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        let raw = row.numeric_features(self.include_retweet_count);
        let dense = match mode {
            DenseMode::Raw => raw,
            DenseMode::Standardized => raw
                .iter()
                .zip(&self.numeric_stats)
                .map(|(x, s)| if s.stddev > 0.0 { (x - s.mean) / s.stddev } else { 0.0 })
                .collect(),
        };
        Ok(CombinedVector {
            sparse,
            dense,
            label: row.label,
        })
    }

    pub fn transform_all(&self, rows: &[FeatureRow], mode: DenseMode) -> Result<Vec<CombinedVector>, VectorizeError> {
        rows.iter().map(|r| self.transform_with(r, mode)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vectorizer serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, VectorizeError> {
        let mut v: Vectorizer =
            serde_json::from_str(s).map_err(|e| VectorizeError::BadDocument(e.to_string()))?;
        if v.format != VECTORIZER_FORMAT || v.version != VECTORIZER_VERSION {
            return Err(VectorizeError::BadDocument(format!(
                "expected {VECTORIZER_FORMAT} v{VECTORIZER_VERSION}, got {} v{}",
                v.format, v.version
            )));
        }
        if v.idf.len() != v.vocabulary.terms.len() || v.numeric_stats.len() != v.numeric_names.len() {
            return Err(VectorizeError::BadDocument("length mismatch".into()));
        }
        v.vocabulary.reindex();
        Ok(v)
    }

    /// SHA-256 over the compact JSON form; binds models to this vectorizer.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vectorizer serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Sparse audit export: one `row,col,value` line per nonzero, dense block
/// offset by the vocabulary size.
pub fn write_sparse_triplets<W: Write>(mut out: W, vectors: &[CombinedVector], dims: Dims) -> std::io::Result<()> {
    writeln!(out, "row,col,value")?;
    for (i, v) in vectors.iter().enumerate() {
        for (col, value) in v.iter_features(dims.sparse) {
            if value != 0.0 {
                writeln!(out, "{i},{col},{value}")?;
            }
        }
    }
    Ok(())
}
