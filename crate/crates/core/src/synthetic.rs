//! Planted-signal corpus for end-to-end checks.
//!
//! Fake records carry all of a small set of planted terms with a fixed
//! probability and skewed metadata (younger, less often verified accounts,
//! more links and hashtags, fewer mentions). Everything else is filler drawn
//! from a shared vocabulary, so without the planted terms and metadata the
//! classes are indistinguishable.

use std::io::Write;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClaimKind, Label, PostKind, TweetRecord};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_records: usize,
    pub fake_fraction: f64,
    pub planted_terms: Vec<String>,
    pub planted_probability: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_records: 2000,
            fake_fraction: 0.10,
            planted_terms: ["zincshield", "garglecure", "nanovax"].map(String::from).to_vec(),
            planted_probability: 0.8,
            seed: 2020,
        }
    }
}

const FILLER: &[&str] = &[
    "virus", "health", "lockdown", "hospital", "doctor", "nurse", "testing", "cases", "deaths", "vaccine", "mask",
    "masks", "distance", "symptoms", "fever", "cough", "travel", "school", "schools", "work", "home", "family",
    "news", "report", "study", "data", "government", "minister", "officials", "city", "country", "world", "week",
    "today", "update", "patients", "care", "staff", "workers", "community", "local", "state", "global", "public",
    "safety", "rules", "guidance", "advice", "spread", "risk", "immune", "treatment", "drug", "trial", "research",
    "scientists", "experts", "claims", "video", "post", "share", "shared", "read", "watch", "live", "stay", "safe",
    "wash", "hands", "water", "soap", "sanitizer", "medicine", "pharmacy", "store", "shop", "food", "supply",
    "economy", "jobs", "business", "market", "numbers", "rate", "rise", "fall", "peak", "curve", "wave", "second",
    "first", "new", "latest", "breaking", "confirmed", "positive", "negative", "recovered", "quarantine",
    "isolation", "contact", "tracing", "app", "phone", "online", "social", "media", "truth", "facts", "check",
    "hoax", "cure", "remedy", "natural", "herbal", "garlic", "lemon", "vitamin", "heat", "sun", "summer",
    "winter", "season", "flu", "cold", "lungs", "breathing", "oxygen", "ventilator", "beds", "icu", "wards",
    "clinic", "centre", "support", "help", "thanks", "heroes", "frontline", "essential", "open", "closed",
    "reopen", "plan", "phase", "limits", "gathering", "church", "park", "beach", "street", "town", "village",
];

const HASHTAGS: &[&str] = &["covid19", "coronavirus", "stayhome", "pandemic", "health", "news", "facts"];
const MENTIONS: &[&str] = &["who", "cdcgov", "nhsuk", "healthagency", "localnews"];
const LOCATIONS: &[&str] = &["", "", "London", "New York", "Lagos", "Delhi", "Sydney", "Toronto"];

fn collected_at() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).single().expect("valid date")
}

fn chance(rng: &mut impl Rng, p: f64) -> bool {
    rng.random_bool(p)
}

/// Generates the corpus. The first `round(n · fake_fraction)` positions of a
/// seeded permutation are fake.
pub fn generate(cfg: &SyntheticConfig) -> Vec<TweetRecord> {
    let mut rng = seed::rng(seed::derive(cfg.seed, Stream::Synthetic, 0));
    let n_fake = (cfg.n_records as f64 * cfg.fake_fraction).round() as usize;
    let mut is_fake = vec![false; cfg.n_records];
    for i in rand::seq::index::sample(&mut rng, cfg.n_records, n_fake) {
        is_fake[i] = true;
    }
    let collected = collected_at();
    is_fake
        .into_iter()
        .enumerate()
        .map(|(i, fake)| {
            let pick = |p_fake: f64, p_real: f64| if fake { p_fake } else { p_real };
            let len = rng.random_range(4..=18);
            let mut words: Vec<String> = (0..len)
                .map(|_| FILLER.choose(&mut rng).expect("filler").to_string())
                .collect();
            if fake && chance(&mut rng, cfg.planted_probability) {
                for term in &cfg.planted_terms {
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, term.clone());
                }
            }
            let mut text = words.join(" ");
            if chance(&mut rng, 0.3) {
                text.push('!');
            }
            let urls = if chance(&mut rng, pick(0.7, 0.4)) {
                vec![format!("https://t.co/{:08x}", rng.random::<u32>())]
            } else {
                vec![]
            };
            let hashtags = if chance(&mut rng, pick(0.6, 0.3)) {
                vec![HASHTAGS.choose(&mut rng).expect("hashtag").to_string()]
            } else {
                vec![]
            };
            let user_mentions = if chance(&mut rng, pick(0.2, 0.4)) {
                vec![MENTIONS.choose(&mut rng).expect("mention").to_string()]
            } else {
                vec![]
            };
            let age_days = if fake {
                rng.random_range(30..900)
            } else {
                rng.random_range(200..4000)
            };
            let retweet_count = if fake {
                rng.random_range(0..400)
            } else {
                rng.random_range(0..120)
            };
            TweetRecord {
                tweet_id: (1_250_000_000_000_000_000u64 + i as u64 * 7919).to_string(),
                text,
                hashtags,
                user_mentions,
                urls,
                retweet_count,
                user_name: format!("user{}", rng.random_range(0..5000)),
                user_location: LOCATIONS.choose(&mut rng).expect("location").to_string(),
                user_verified: chance(&mut rng, pick(0.1, 0.5)),
                account_created_at: collected - Duration::days(age_days),
                collected_at: collected,
                label: Label::from_bool(fake),
                claim_kind: if chance(&mut rng, 0.4) {
                    ClaimKind::Claim
                } else {
                    ClaimKind::NewsArticle
                },
                post_kind: if chance(&mut rng, 0.7) {
                    PostKind::Tweet
                } else {
                    PostKind::Reply
                },
            }
        })
        .collect()
}

/// Label index CSV matching the records.
pub fn write_index<W: Write>(out: W, records: &[TweetRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "label", "claim_kind", "post_kind"])?;
    for r in records {
        w.write_record([
            r.tweet_id.as_str(),
            if r.label == Label::Fake { "fake" } else { "real" },
            r.claim_kind.as_str(),
            r.post_kind.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, write_records};
    use std::path::PathBuf;

    fn bundle_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic")
    }

    fn rendered() -> (Vec<u8>, Vec<u8>) {
        let records = generate(&SyntheticConfig::default());
        let mut fixture = Vec::new();
        write_records(&mut fixture, &records).unwrap();
        let mut index = Vec::new();
        write_index(&mut index, &records).unwrap();
        (fixture, index)
    }

    #[test]
    fn shape_and_skew() {
        let cfg = SyntheticConfig::default();
        let records = generate(&cfg);
        assert_eq!(records.len(), 2000);
        let fake: Vec<&TweetRecord> = records.iter().filter(|r| r.label == Label::Fake).collect();
        assert_eq!(fake.len(), 200);
        let planted = fake.iter().filter(|r| cfg.planted_terms.iter().all(|t| r.text.contains(t.as_str()))).count();
        assert!((130..=190).contains(&planted), "{planted}");
        assert!(records
            .iter()
            .filter(|r| r.label == Label::Real)
            .all(|r| cfg.planted_terms.iter().all(|t| !r.text.contains(t.as_str()))));
        assert!(records.iter().all(|r| r.validate().is_ok()));
        assert_eq!(ingest(records.clone()).dataset.records, records);
        assert_eq!(generate(&cfg), records);
    }

    #[test]
    fn bundled_files_match_generator() {
        let (fixture, index) = rendered();
        let dir = bundle_dir();
        assert!(std::fs::read(dir.join("fixture.jsonl")).unwrap() == fixture, "fixture.jsonl is stale");
        assert!(std::fs::read(dir.join("index.csv")).unwrap() == index, "index.csv is stale");
    }

    /// Rewrites the bundled files: `cargo test -p infodemic -- --ignored regenerate`.
    #[test]
    #[ignore]
    fn regenerate_bundle() {
        let (fixture, index) = rendered();
        let dir = bundle_dir();
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("fixture.jsonl"), fixture).unwrap();
        std::fs::write(dir.join("index.csv"), index).unwrap();
    }
}
