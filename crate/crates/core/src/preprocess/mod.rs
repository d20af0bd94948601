//! Text cleaning and binarized tweet features.

mod stopwords;

pub use stopwords::{STOP_WORDS, STOP_WORDS_VERSION};

use std::collections::HashSet;
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Label, TweetRecord};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cannot fit thresholds on an empty training set")]
    EmptyTrainingSet,
    #[error("word count threshold must be positive")]
    InvalidWordCountThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub word_count_threshold: usize,
    pub include_retweet_count: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            word_count_threshold: 10,
            include_retweet_count: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub word_count_threshold: usize,
    pub account_age_threshold_days: f64,
    pub retweet_count_threshold: f64,
    pub fitted_on: String,
}

/// Binarized representation of one tweet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub derived_text: String,
    pub is_user_verified: u8,
    pub word_count_bin: u8,
    pub tweet_url_count_bin: u8,
    pub hashtag_count_bin: u8,
    pub user_mention_count_bin: u8,
    pub retweet_count_bin: u8,
    pub account_age_bin: u8,
    pub label: Label,
}

/// Names of the numeric features, in [`FeatureRow::numeric_features`] order.
pub fn numeric_feature_names(include_retweet_count: bool) -> Vec<&'static str> {
    let mut names = vec![
        "is_user_verified",
        "word_count_bin",
        "tweet_url_count_bin",
        "hashtag_count_bin",
        "user_mention_count_bin",
    ];
    if include_retweet_count {
        names.push("retweet_count_bin");
    }
    names.push("account_age_bin");
    names
}

impl FeatureRow {
    pub fn numeric_features(&self, include_retweet_count: bool) -> Vec<f64> {
        let mut v = vec![
            self.is_user_verified as f64,
            self.word_count_bin as f64,
            self.tweet_url_count_bin as f64,
            self.hashtag_count_bin as f64,
            self.user_mention_count_bin as f64,
        ];
        if include_retweet_count {
            v.push(self.retweet_count_bin as f64);
        }
        v.push(self.account_age_bin as f64);
        v
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.derived_text.split(' ').filter(|t| !t.is_empty())
    }
}

/// Text, hashtags, mentions, user name and location, space separated, empty
/// parts skipped.
pub fn assemble_text(record: &TweetRecord) -> String {
    let parts = std::iter::once(record.text.as_str())
        .chain(record.hashtags.iter().map(String::as_str))
        .chain(record.user_mentions.iter().map(String::as_str))
        .chain([record.user_name.as_str(), record.user_location.as_str()]);
    let mut out = String::new();
    for part in parts.map(str::trim).filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOP_WORDS.iter().copied().collect())
}

pub fn is_stop_word(token: &str) -> bool {
    stop_words().contains(token)
}

fn strip_urls(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    loop {
        let next = ["http://", "https://"]
            .iter()
            .filter_map(|scheme| rest.find(scheme))
            .min();
        match next {
            Some(start) => {
                out.push_str(&rest[..start]);
                let tail = &rest[start..];
                let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
                out.push(' ');
                rest = &tail[end..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

fn normalize_chars(s: &str) -> String {
    s.nfc()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|c| c.is_alphanumeric() || *c == ' ')
        .collect()
}

/// NFC, lowercase, URL removal, non-alphanumeric removal, whitespace
/// collapse and stop-word removal.
pub fn clean_text(raw: &str) -> String {
    let lowered: String = raw.nfc().flat_map(char::to_lowercase).collect();
    let mut text = normalize_chars(&strip_urls(&lowered));
    // Composition can surface after removing characters between combining
    // sequences; iterate to a fixed point so cleaning is idempotent.
    for _ in 0..8 {
        let next = normalize_chars(&text);
        if next == text {
            break;
        }
        text = next;
    }
    text.split_whitespace()
        .filter(|t| !is_stop_word(t))
        .collect::<Vec<_>>()
        .join(" ")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Fits the metadata thresholds on training records only. Account age and
/// retweet count cut at the training median.
pub fn fit_thresholds(
    train: &[TweetRecord],
    word_count_threshold: usize,
) -> Result<Thresholds, PreprocessError> {
    if train.is_empty() {
        return Err(PreprocessError::EmptyTrainingSet);
    }
    if word_count_threshold == 0 {
        return Err(PreprocessError::InvalidWordCountThreshold);
    }
    let mut ages: Vec<f64> = train.iter().map(TweetRecord::account_age_days).collect();
    let mut retweets: Vec<f64> = train.iter().map(|r| r.retweet_count as f64).collect();
    Ok(Thresholds {
        word_count_threshold,
        account_age_threshold_days: median(&mut ages),
        retweet_count_threshold: median(&mut retweets),
        fitted_on: format!("train:{}", train.len()),
    })
}

pub fn extract_features(record: &TweetRecord, t: &Thresholds) -> FeatureRow {
    let derived_text = clean_text(&assemble_text(record));
    let word_count = derived_text.split(' ').filter(|w| !w.is_empty()).count();
    let bin = |b: bool| b as u8;
    FeatureRow {
        is_user_verified: bin(record.user_verified),
        word_count_bin: bin(word_count > t.word_count_threshold),
        tweet_url_count_bin: bin(!record.urls.is_empty()),
        hashtag_count_bin: bin(!record.hashtags.is_empty()),
        user_mention_count_bin: bin(!record.user_mentions.is_empty()),
        retweet_count_bin: bin(record.retweet_count as f64 > t.retweet_count_threshold),
        account_age_bin: bin(record.account_age_days() > t.account_age_threshold_days),
        label: record.label,
        derived_text,
    }
}

pub fn extract_all(records: &[TweetRecord], t: &Thresholds) -> Vec<FeatureRow> {
    records.iter().map(|r| extract_features(r, t)).collect()
}

const CSV_HEADER: [&str; 9] = [
    "derived_text",
    "is_user_verified",
    "word_count_bin",
    "tweet_url_count_bin",
    "hashtag_count_bin",
    "user_mention_count_bin",
    "retweet_count_bin",
    "account_age_bin",
    "label",
];

/// Writes the feature table as CSV with `derived_text` always quoted.
pub fn write_feature_csv<W: Write>(mut out: W, rows: &[FeatureRow]) -> csv::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_writer(out);
    for r in rows {
        w.write_record([
            r.derived_text.clone(),
            r.is_user_verified.to_string(),
            r.word_count_bin.to_string(),
            r.tweet_url_count_bin.to_string(),
            r.hashtag_count_bin.to_string(),
            r.user_mention_count_bin.to_string(),
            r.retweet_count_bin.to_string(),
            r.account_age_bin.to_string(),
            r.label.as_u8().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: std::io::Read>(input: R) -> Result<Vec<FeatureRow>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(format!("unexpected feature table header: {headers:?}"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bit = |j: usize| -> Result<u8, String> {
            match rec.get(j) {
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                other => Err(format!("row {}: {} is {other:?}, expected 0 or 1", i + 1, CSV_HEADER[j])),
            }
        };
        rows.push(FeatureRow {
            derived_text: rec.get(0).unwrap_or_default().to_string(),
            is_user_verified: bit(1)?,
            word_count_bin: bit(2)?,
            tweet_url_count_bin: bit(3)?,
            hashtag_count_bin: bit(4)?,
            user_mention_count_bin: bit(5)?,
            retweet_count_bin: bit(6)?,
            account_age_bin: bit(7)?,
            label: Label::from_bool(bit(8)? == 1),
        });
    }
    Ok(rows)
}
