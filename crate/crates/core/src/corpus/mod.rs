//! Labeled tweet corpora: label indexes, hydrated records, cleaning and
//! distribution summaries.

mod hydrate;
mod index;

pub use hydrate::{
    hydrate, hydrate_with, parse_lookup_response, HttpResponse, Hydration, HydrationConfig,
    HydrationMode, LiveConfig, LookupTransport, TransportError, UreqTransport,
    BEARER_TOKEN_ENV, DEFAULT_LOOKUP_ENDPOINT, MAX_IDS_PER_REQUEST,
};
pub use index::{load_label_index, parse_label_index, IndexEntry, LabelIndex, RejectedRow};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing or incomplete header, expected `id,label,claim_kind,post_kind`")]
    MissingHeader { path: String },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("fixture {path} line {line}: {message}")]
    MalformedFixture {
        path: String,
        line: usize,
        message: String,
    },
    #[error("hydration requires a bearer token in ${BEARER_TOKEN_ENV}")]
    MissingCredential,
    #[error("authentication rejected by lookup endpoint (HTTP {status})")]
    AuthenticationFailed { status: u16 },
    #[error("malformed lookup response: {0}")]
    MalformedResponse(String),
}

/// Binary class. Serialized as the integers `0` (real) and `1` (fake).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_bool(fake: bool) -> Label {
        if fake {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }

    /// Parses `0|1|real|fake` (case-insensitive for the words).
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "real" => Some(Label::Real),
            "1" | "fake" => Some(Label::Fake),
            _ => None,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Claim,
    NewsArticle,
}

impl ClaimKind {
    pub fn parse(s: &str) -> Option<ClaimKind> {
        match s.trim() {
            "claim" => Some(ClaimKind::Claim),
            "news_article" => Some(ClaimKind::NewsArticle),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClaimKind::Claim => "claim",
            ClaimKind::NewsArticle => "news_article",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostKind {
    Tweet,
    Reply,
}

impl PostKind {
    pub fn parse(s: &str) -> Option<PostKind> {
        match s.trim() {
            "tweet" => Some(PostKind::Tweet),
            "reply" => Some(PostKind::Reply),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PostKind::Tweet => "tweet",
            PostKind::Reply => "reply",
        }
    }
}

/// One hydrated tweet. Field names are the newline-delimited fixture schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub user_mentions: Vec<String>,
    #[serde(default)]
    pub urls: Vec<String>,
    #[serde(default)]
    pub retweet_count: u64,
    #[serde(default)]
    pub user_name: String,
    #[serde(default)]
    pub user_location: String,
    #[serde(default)]
    pub user_verified: bool,
    pub account_created_at: DateTime<Utc>,
    pub collected_at: DateTime<Utc>,
    pub label: Label,
    pub claim_kind: ClaimKind,
    pub post_kind: PostKind,
}

impl TweetRecord {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.tweet_id.is_empty() || !self.tweet_id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("tweet_id {:?} is not a decimal id", self.tweet_id));
        }
        if self.account_created_at > self.collected_at {
            return Err(format!(
                "tweet {}: account_created_at is after collected_at",
                self.tweet_id
            ));
        }
        for (name, list) in [
            ("hashtags", &self.hashtags),
            ("user_mentions", &self.user_mentions),
            ("urls", &self.urls),
        ] {
            if list.iter().any(|s| s.is_empty()) {
                return Err(format!("tweet {}: empty entry in {name}", self.tweet_id));
            }
        }
        Ok(())
    }

    /// Account age at collection time, in fractional days.
    pub fn account_age_days(&self) -> f64 {
        (self.collected_at - self.account_created_at).num_seconds() as f64 / 86_400.0
    }

    fn has_no_text(&self) -> bool {
        self.text.trim().is_empty() && self.hashtags.is_empty() && self.user_mentions.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<TweetRecord>,
    pub provenance: String,
    pub seed_log: Vec<(String, u64)>,
}

impl Dataset {
    pub fn new(records: Vec<TweetRecord>, provenance: impl Into<String>) -> Self {
        Dataset {
            records,
            provenance: provenance.into(),
            seed_log: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// Outcome of [`ingest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub duplicates: usize,
    pub missing: usize,
}

/// Drops duplicate tweet ids (first occurrence wins) and records without any
/// text-bearing content.
pub fn ingest(records: Vec<TweetRecord>) -> Ingested {
    let mut seen = HashSet::with_capacity(records.len());
    let mut kept = Vec::with_capacity(records.len());
    let (mut duplicates, mut missing) = (0, 0);
    for record in records {
        if !seen.insert(record.tweet_id.clone()) {
            duplicates += 1;
            continue;
        }
        if record.has_no_text() {
            missing += 1;
            continue;
        }
        kept.push(record);
    }
    Ingested {
        dataset: Dataset::new(kept, "ingest"),
        duplicates,
        missing,
    }
}

/// One cell of the label × claim kind × post kind cross-classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub label: Label,
    pub claim_kind: ClaimKind,
    pub post_kind: PostKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub counts: BTreeMap<Cell, usize>,
    pub total: usize,
    /// `(fake %, real %)`, integer percents. `(0, 0)` for an empty table.
    pub imbalance_ratio: (f64, f64),
}

impl DistributionTable {
    pub fn from_cells(cells: impl IntoIterator<Item = Cell>) -> Self {
        let mut counts = BTreeMap::new();
        for label in [Label::Fake, Label::Real] {
            for claim_kind in [ClaimKind::Claim, ClaimKind::NewsArticle] {
                for post_kind in [PostKind::Tweet, PostKind::Reply] {
                    counts.insert(
                        Cell {
                            label,
                            claim_kind,
                            post_kind,
                        },
                        0usize,
                    );
                }
            }
        }
        let mut total = 0;
        for cell in cells {
            *counts.entry(cell).or_insert(0) += 1;
            total += 1;
        }
        let mut table = DistributionTable {
            counts,
            total,
            imbalance_ratio: (0.0, 0.0),
        };
        if total > 0 {
            let fake = 100.0 * table.label_total(Label::Fake) as f64 / total as f64;
            let fake = fake.round();
            table.imbalance_ratio = (fake, 100.0 - fake);
        }
        table
    }

    pub fn get(&self, label: Label, claim_kind: ClaimKind, post_kind: PostKind) -> usize {
        self.counts
            .get(&Cell {
                label,
                claim_kind,
                post_kind,
            })
            .copied()
            .unwrap_or(0)
    }

    pub fn label_total(&self, label: Label) -> usize {
        self.counts
            .iter()
            .filter(|(c, _)| c.label == label)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn post_total(&self, post_kind: PostKind) -> usize {
        self.counts
            .iter()
            .filter(|(c, _)| c.post_kind == post_kind)
            .map(|(_, n)| n)
            .sum()
    }

    /// Table with one row per post kind and one column per (label, claim kind).
    pub fn to_markdown(&self) -> String {
        let columns = [
            (Label::Fake, ClaimKind::Claim, "False Claim"),
            (Label::Fake, ClaimKind::NewsArticle, "Fake News Article"),
            (Label::Real, ClaimKind::Claim, "True Claim"),
            (Label::Real, ClaimKind::NewsArticle, "True News Article"),
        ];
        let mut out = String::from("| Source |");
        for (_, _, name) in columns {
            out.push_str(&format!(" {name} |"));
        }
        out.push_str(" TOTAL |\n|---|---|---|---|---|---|\n");
        for (post, name) in [(PostKind::Tweet, "Tweets"), (PostKind::Reply, "Replies")] {
            out.push_str(&format!("| {name} |"));
            for (label, claim, _) in columns {
                out.push_str(&format!(" {} |", self.get(label, claim, post)));
            }
            out.push_str(&format!(" {} |\n", self.post_total(post)));
        }
        out.push_str("| TOTAL |");
        for (label, claim, _) in columns {
            out.push_str(&format!(
                " {} |",
                self.get(label, claim, PostKind::Tweet) + self.get(label, claim, PostKind::Reply)
            ));
        }
        out.push_str(&format!(" {} |\n", self.total));
        out
    }
}

pub fn summarize(dataset: &Dataset) -> DistributionTable {
    DistributionTable::from_cells(dataset.records.iter().map(|r| Cell {
        label: r.label,
        claim_kind: r.claim_kind,
        post_kind: r.post_kind,
    }))
}

/// Same as [`summarize`], computed from the label index alone.
pub fn summarize_index(index: &LabelIndex) -> DistributionTable {
    DistributionTable::from_cells(index.entries.iter().map(|e| Cell {
        label: e.label,
        claim_kind: e.claim_kind,
        post_kind: e.post_kind,
    }))
}

/// Reads newline-delimited [`TweetRecord`] JSON. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<TweetRecord>, CorpusError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::MalformedFixture {
            path: display.clone(),
            line: i + 1,
            message,
        };
        let record: TweetRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        record.validate().map_err(malformed)?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_records<W: Write>(mut out: W, records: &[TweetRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    pub fn record(id: &str, text: &str, label: Label) -> TweetRecord {
        TweetRecord {
            tweet_id: id.to_string(),
            text: text.to_string(),
            hashtags: vec![],
            user_mentions: vec![],
            urls: vec![],
            retweet_count: 0,
            user_name: String::new(),
            user_location: String::new(),
            user_verified: false,
            account_created_at: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
            collected_at: Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap(),
            label,
            claim_kind: ClaimKind::Claim,
            post_kind: PostKind::Tweet,
        }
    }

    #[test]
    fn ingest_collapses_duplicates_to_first_occurrence() {
        let a = record("1", "first", Label::Fake);
        let mut a2 = record("1", "second", Label::Real);
        a2.retweet_count = 9;
        let b = record("2", "b", Label::Real);
        let out = ingest(vec![a.clone(), a2, b.clone()]);
        assert_eq!(out.dataset.records, vec![a, b]);
        assert_eq!(out.duplicates, 1);
        assert_eq!(out.missing, 0);
    }

    #[test]
    fn ingest_drops_records_without_text() {
        let empty = record("1", "", Label::Fake);
        let mut tagged = record("2", "", Label::Fake);
        tagged.hashtags.push("covid".into());
        let out = ingest(vec![empty, tagged.clone()]);
        assert_eq!(out.dataset.records, vec![tagged]);
        assert_eq!(out.missing, 1);
    }

    #[test]
    fn ingest_of_clean_list_is_identity() {
        let recs: Vec<_> = (0..5)
            .map(|i| record(&i.to_string(), "text", Label::Real))
            .collect();
        let out = ingest(recs.clone());
        assert_eq!(out.dataset.records, recs);
        assert_eq!((out.duplicates, out.missing), (0, 0));
    }

    #[test]
    fn summarize_ratio_and_empty_case() {
        let mut recs = Vec::new();
        for i in 0..100 {
            let label = if i < 4 { Label::Fake } else { Label::Real };
            recs.push(record(&i.to_string(), "t", label));
        }
        let table = summarize(&Dataset::new(recs, "test"));
        assert_eq!(table.imbalance_ratio, (4.0, 96.0));
        assert_eq!(table.total, 100);

        let empty = summarize(&Dataset::default());
        assert_eq!(empty.total, 0);
        assert_eq!(empty.imbalance_ratio, (0.0, 0.0));
        assert!(empty.counts.values().all(|&n| n == 0));
    }

    #[test]
    fn validate_rejects_inverted_timestamps_and_empty_entities() {
        let mut r = record("1", "x", Label::Real);
        assert!(r.validate().is_ok());
        r.hashtags.push(String::new());
        assert!(r.validate().is_err());
        let mut r = record("1", "x", Label::Real);
        std::mem::swap(&mut r.account_created_at, &mut r.collected_at);
        assert!(r.validate().is_err());
    }

    #[test]
    fn fixture_field_names_and_label_encoding() {
        let r = record("7", "x", Label::Fake);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["label"], 1);
        assert_eq!(json["claim_kind"], "claim");
        assert_eq!(json["post_kind"], "tweet");
        for key in [
            "tweet_id",
            "text",
            "hashtags",
            "user_mentions",
            "urls",
            "retweet_count",
            "user_name",
            "user_location",
            "user_verified",
            "account_created_at",
            "collected_at",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    fn arb_record() -> impl Strategy<Value = TweetRecord> {
        (
            0u32..40,
            "[a-z ]{0,12}",
            proptest::collection::vec("[a-z]{1,5}", 0..2),
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(id, text, tags, fake, news, reply)| {
                let mut r = record(&id.to_string(), &text, Label::from_bool(fake));
                r.hashtags = tags;
                r.claim_kind = if news {
                    ClaimKind::NewsArticle
                } else {
                    ClaimKind::Claim
                };
                r.post_kind = if reply { PostKind::Reply } else { PostKind::Tweet };
                r
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn summarize_cells_partition_dataset(recs in proptest::collection::vec(arb_record(), 0..60)) {
            let ds = Dataset::new(recs, "prop");
            let t = summarize(&ds);
            prop_assert_eq!(t.counts.values().sum::<usize>(), ds.len());
            prop_assert_eq!(t.total, ds.len());
            if t.total > 0 {
                prop_assert!((t.imbalance_ratio.0 + t.imbalance_ratio.1 - 100.0).abs() <= 0.01);
            }
        }

        #[test]
        fn ingest_is_idempotent(recs in proptest::collection::vec(arb_record(), 0..40)) {
            let once = ingest(recs);
            let twice = ingest(once.dataset.records.clone());
            prop_assert_eq!(&once.dataset, &twice.dataset);
            prop_assert_eq!((twice.duplicates, twice.missing), (0, 0));
        }
    }
}
