//! Tweet id hydration, from a fixture file or from a tweet-lookup endpoint.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

use super::{read_records, CorpusError, Dataset, IndexEntry, LabelIndex, TweetRecord};

pub const MAX_IDS_PER_REQUEST: usize = 100;
pub const BEARER_TOKEN_ENV: &str = "INFODEMIC_BEARER_TOKEN";
pub const DEFAULT_LOOKUP_ENDPOINT: &str = "https://api.twitter.com/2/tweets";

const LOOKUP_FIELDS: &str = "tweet.fields=created_at,entities,public_metrics,author_id\
&expansions=author_id&user.fields=created_at,location,verified,name";

#[derive(Debug, Clone, PartialEq)]
pub enum HydrationMode {
    /// Newline-delimited [`TweetRecord`] JSON.
    Fixture(PathBuf),
    Live(LiveConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydrationConfig {
    pub mode: HydrationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    pub endpoint: String,
    pub bearer_token: Option<String>,
    /// Concurrent in-flight requests.
    pub parallelism: usize,
    /// Retries per batch after a 429, a 5xx or a transport failure.
    pub max_retries: u32,
    /// Timestamp stamped into `collected_at` of every hydrated record.
    pub collected_at: DateTime<Utc>,
}

impl LiveConfig {
    pub fn from_env(collected_at: DateTime<Utc>) -> Self {
        LiveConfig {
            endpoint: DEFAULT_LOOKUP_ENDPOINT.to_string(),
            bearer_token: std::env::var(BEARER_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            parallelism: 4,
            max_retries: 5,
            collected_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hydration {
    pub dataset: Dataset,
    /// Ids the source does not know about (deleted or suspended tweets).
    pub not_found: Vec<String>,
    /// Ids whose batch failed after all retries.
    pub failed: Vec<String>,
    pub errors: Vec<String>,
    pub requests: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    /// Lowercased header names.
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// A single authenticated GET. Implemented over HTTPS by [`UreqTransport`]
/// and by canned responses in tests.
pub trait LookupTransport: Sync {
    fn get(&self, url: &str, bearer_token: &str) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl LookupTransport for UreqTransport {
    fn get(&self, url: &str, bearer_token: &str) -> Result<HttpResponse, TransportError> {
        let mut resp = self
            .agent
            .get(url)
            .header("Authorization", &format!("Bearer {bearer_token}"))
            .call()
            .map_err(|e| TransportError(e.to_string()))?;
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str().to_ascii_lowercase(),
                    v.to_str().unwrap_or_default().to_string(),
                )
            })
            .collect();
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

pub fn hydrate(index: &LabelIndex, config: &HydrationConfig) -> Result<Hydration, CorpusError> {
    match &config.mode {
        HydrationMode::Fixture(path) => hydrate_from_fixture(index, path),
        HydrationMode::Live(live) => {
            let transport = UreqTransport::default();
            hydrate_with(index, &transport, live, &std::thread::sleep)
        }
    }
}

fn hydrate_from_fixture(index: &LabelIndex, path: &Path) -> Result<Hydration, CorpusError> {
    let mut by_id: HashMap<String, TweetRecord> = HashMap::new();
    for record in read_records(path)? {
        by_id.entry(record.tweet_id.clone()).or_insert(record);
    }
    let mut records = Vec::new();
    let mut not_found = Vec::new();
    for entry in index.unique_entries() {
        match by_id.get(&entry.tweet_id) {
            Some(r) => records.push(apply_index_labels(r.clone(), entry)),
            None => not_found.push(entry.tweet_id.clone()),
        }
    }
    Ok(Hydration {
        dataset: Dataset::new(records, format!("fixture:{}", path.display())),
        not_found,
        failed: Vec::new(),
        errors: Vec::new(),
        requests: 0,
    })
}

fn apply_index_labels(mut record: TweetRecord, entry: &IndexEntry) -> TweetRecord {
    record.label = entry.label;
    record.claim_kind = entry.claim_kind;
    record.post_kind = entry.post_kind;
    record
}

enum BatchOutcome {
    Found(Vec<TweetRecord>, usize),
    Failed(String, usize),
    Unauthorized(u16),
}

/// Live hydration over an arbitrary transport. `sleep` is called for every
/// rate-limit or backoff wait.
pub fn hydrate_with(
    index: &LabelIndex,
    transport: &dyn LookupTransport,
    config: &LiveConfig,
    sleep: &(dyn Fn(Duration) + Sync),
) -> Result<Hydration, CorpusError> {
    let token = config
        .bearer_token
        .as_deref()
        .filter(|t| !t.is_empty())
        .ok_or(CorpusError::MissingCredential)?;
    let entries = index.unique_entries();
    let batches: Vec<&[&IndexEntry]> = entries.chunks(MAX_IDS_PER_REQUEST).collect();
    let parallelism = config.parallelism.max(1);

    let mut outcomes: Vec<Option<BatchOutcome>> = Vec::with_capacity(batches.len());
    outcomes.resize_with(batches.len(), || None);
    for (wave_no, wave) in batches.chunks(parallelism).enumerate() {
        let results: Vec<BatchOutcome> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| scope.spawn(|| fetch_batch(batch, transport, token, config, sleep)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| BatchOutcome::Failed("worker panicked".into(), 0))
                })
                .collect()
        });
        for (i, outcome) in results.into_iter().enumerate() {
            outcomes[wave_no * parallelism + i] = Some(outcome);
        }
    }

    let mut found: HashMap<String, TweetRecord> = HashMap::new();
    let mut failed_ids = std::collections::HashSet::new();
    let mut errors = Vec::new();
    let mut requests = 0;
    for (batch, outcome) in batches.iter().zip(outcomes) {
        match outcome.expect("every batch has an outcome") {
            BatchOutcome::Found(records, n) => {
                requests += n;
                for r in records {
                    found.entry(r.tweet_id.clone()).or_insert(r);
                }
            }
            BatchOutcome::Failed(message, n) => {
                requests += n;
                errors.push(format!(
                    "batch starting at id {}: {message}",
                    batch[0].tweet_id
                ));
                failed_ids.extend(batch.iter().map(|e| e.tweet_id.clone()));
            }
            BatchOutcome::Unauthorized(status) => {
                return Err(CorpusError::AuthenticationFailed { status })
            }
        }
    }

    let mut records = Vec::new();
    let mut not_found = Vec::new();
    let mut failed = Vec::new();
    for entry in entries {
        if let Some(r) = found.remove(&entry.tweet_id) {
            records.push(apply_index_labels(r, entry));
        } else if failed_ids.contains(&entry.tweet_id) {
            failed.push(entry.tweet_id.clone());
        } else {
            not_found.push(entry.tweet_id.clone());
        }
    }
    Ok(Hydration {
        dataset: Dataset::new(records, format!("live:{}", config.endpoint)),
        not_found,
        failed,
        errors,
        requests,
    })
}

fn fetch_batch(
    batch: &[&IndexEntry],
    transport: &dyn LookupTransport,
    token: &str,
    config: &LiveConfig,
    sleep: &(dyn Fn(Duration) + Sync),
) -> BatchOutcome {
    let ids: Vec<&str> = batch.iter().map(|e| e.tweet_id.as_str()).collect();
    let url = format!("{}?ids={}&{LOOKUP_FIELDS}", config.endpoint, ids.join(","));
    let mut attempts = 0usize;
    let mut last_error = String::new();
    for retry in 0..=config.max_retries {
        attempts += 1;
        match transport.get(&url, token) {
            Ok(resp) if resp.status == 200 => {
                return match parse_lookup_response(&resp.body, config.collected_at) {
                    Ok(records) => BatchOutcome::Found(records, attempts),
                    Err(e) => BatchOutcome::Failed(e.to_string(), attempts),
                };
            }
            Ok(resp) if resp.status == 401 || resp.status == 403 => {
                return BatchOutcome::Unauthorized(resp.status)
            }
            Ok(resp) if resp.status == 429 => {
                last_error = "rate limited (HTTP 429)".into();
                if retry < config.max_retries {
                    sleep(rate_limit_wait(&resp, Utc::now(), retry));
                }
            }
            Ok(resp) if resp.status >= 500 => {
                last_error = format!("server error (HTTP {})", resp.status);
                if retry < config.max_retries {
                    sleep(backoff(retry));
                }
            }
            Ok(resp) => {
                return BatchOutcome::Failed(format!("unexpected HTTP {}", resp.status), attempts)
            }
            Err(e) => {
                last_error = e.to_string();
                if retry < config.max_retries {
                    sleep(backoff(retry));
                }
            }
        }
    }
    BatchOutcome::Failed(
        format!("{last_error}; gave up after {attempts} attempts"),
        attempts,
    )
}

fn backoff(retry: u32) -> Duration {
    Duration::from_secs(1u64 << retry.min(6))
}

/// Wait until `x-rate-limit-reset` (epoch seconds), else `retry-after`
/// (seconds), else exponential backoff.
fn rate_limit_wait(resp: &HttpResponse, now: DateTime<Utc>, retry: u32) -> Duration {
    if let Some(reset) = resp
        .header("x-rate-limit-reset")
        .and_then(|v| v.trim().parse::<i64>().ok())
    {
        let secs = (reset - now.timestamp()).max(0) as u64;
        return Duration::from_secs(secs + 1);
    }
    if let Some(secs) = resp
        .header("retry-after")
        .and_then(|v| v.trim().parse::<u64>().ok())
    {
        return Duration::from_secs(secs);
    }
    backoff(retry)
}

#[derive(Deserialize)]
struct LookupResponse {
    #[serde(default)]
    data: Vec<ApiTweet>,
    #[serde(default)]
    includes: Option<ApiIncludes>,
}

#[derive(Deserialize)]
struct ApiIncludes {
    #[serde(default)]
    users: Vec<ApiUser>,
}

#[derive(Deserialize)]
struct ApiTweet {
    id: String,
    #[serde(default)]
    text: String,
    author_id: Option<String>,
    entities: Option<ApiEntities>,
    public_metrics: Option<ApiMetrics>,
}

#[derive(Deserialize, Default)]
struct ApiEntities {
    #[serde(default)]
    hashtags: Vec<ApiTag>,
    #[serde(default)]
    mentions: Vec<ApiMention>,
    #[serde(default)]
    urls: Vec<ApiUrl>,
}

#[derive(Deserialize)]
struct ApiTag {
    tag: String,
}

#[derive(Deserialize)]
struct ApiMention {
    username: String,
}

#[derive(Deserialize)]
struct ApiUrl {
    url: Option<String>,
    expanded_url: Option<String>,
}

#[derive(Deserialize)]
struct ApiMetrics {
    #[serde(default)]
    retweet_count: u64,
}

#[derive(Deserialize)]
struct ApiUser {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    location: Option<String>,
    #[serde(default)]
    verified: bool,
    created_at: Option<DateTime<Utc>>,
}

/// Converts a tweet-lookup JSON body into records. Labels are placeholders
/// until the caller applies the index entry.
pub fn parse_lookup_response(
    body: &str,
    collected_at: DateTime<Utc>,
) -> Result<Vec<TweetRecord>, CorpusError> {
    let parsed: LookupResponse =
        serde_json::from_str(body).map_err(|e| CorpusError::MalformedResponse(e.to_string()))?;
    let users: HashMap<String, ApiUser> = parsed
        .includes
        .map(|inc| inc.users.into_iter().map(|u| (u.id.clone(), u)).collect())
        .unwrap_or_default();
    let non_empty = |v: Vec<String>| v.into_iter().filter(|s| !s.is_empty()).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(parsed.data.len());
    for t in parsed.data {
        let entities = t.entities.unwrap_or_default();
        let user = t.author_id.as_ref().and_then(|id| users.get(id));
        let account_created_at = user
            .and_then(|u| u.created_at)
            .unwrap_or(collected_at)
            .min(collected_at);
        out.push(TweetRecord {
            tweet_id: t.id,
            text: t.text,
            hashtags: non_empty(entities.hashtags.into_iter().map(|h| h.tag).collect()),
            user_mentions: non_empty(entities.mentions.into_iter().map(|m| m.username).collect()),
            urls: non_empty(
                entities
                    .urls
                    .into_iter()
                    .filter_map(|u| u.expanded_url.or(u.url))
                    .collect(),
            ),
            retweet_count: t.public_metrics.map(|m| m.retweet_count).unwrap_or(0),
            user_name: user.map(|u| u.name.clone()).unwrap_or_default(),
            user_location: user.and_then(|u| u.location.clone()).unwrap_or_default(),
            user_verified: user.map(|u| u.verified).unwrap_or(false),
            account_created_at,
            collected_at,
            label: super::Label::Real,
            claim_kind: super::ClaimKind::Claim,
            post_kind: super::PostKind::Tweet,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_label_index, ClaimKind, Label, PostKind};
    use chrono::TimeZone;
    use std::sync::Mutex;

    fn index_of(ids: &[u64]) -> LabelIndex {
        let mut csv = String::from("id,label,claim_kind,post_kind\n");
        for id in ids {
            csv.push_str(&format!("{id},fake,claim,tweet\n"));
        }
        parse_label_index(csv.as_bytes(), "inline").unwrap()
    }

    fn live() -> LiveConfig {
        LiveConfig {
            endpoint: "https://lookup.test/2/tweets".into(),
            bearer_token: Some("token".into()),
            parallelism: 3,
            max_retries: 5,
            collected_at: Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap(),
        }
    }

    fn ids_of(url: &str) -> Vec<String> {
        let q = url.split("ids=").nth(1).unwrap();
        let ids = q.split('&').next().unwrap();
        ids.split(',').map(str::to_string).collect()
    }

    fn body_for(ids: &[String]) -> String {
        let data: Vec<_> = ids
            .iter()
            .map(|id| {
                serde_json::json!({
                    "id": id, "text": format!("tweet {id}"), "author_id": "9",
                    "entities": {"hashtags": [{"tag": "covid"}], "mentions": [{"username": "who"}],
                                  "urls": [{"url": "https://t.co/x", "expanded_url": "https://who.int"}]},
                    "public_metrics": {"retweet_count": 3}
                })
            })
            .collect();
        serde_json::json!({
            "data": data,
            "includes": {"users": [{"id": "9", "name": "Ana", "location": "Leeds", "verified": true,
                                      "created_at": "2015-03-01T00:00:00Z"}]}
        })
        .to_string()
    }

    /// Serves every requested id except those in `missing`.
    struct FakeApi {
        missing: Vec<String>,
        calls: Mutex<Vec<usize>>,
        throttle_first: Mutex<u32>,
        status: u16,
    }

    impl FakeApi {
        fn new() -> Self {
            FakeApi {
                missing: vec![],
                calls: Mutex::new(vec![]),
                throttle_first: Mutex::new(0),
                status: 200,
            }
        }
    }

    impl LookupTransport for FakeApi {
        fn get(&self, url: &str, token: &str) -> Result<HttpResponse, TransportError> {
            assert_eq!(token, "token");
            let ids = ids_of(url);
            self.calls.lock().unwrap().push(ids.len());
            {
                let mut throttle = self.throttle_first.lock().unwrap();
                if *throttle > 0 {
                    *throttle -= 1;
                    return Ok(HttpResponse {
                        status: 429,
                        headers: vec![("x-rate-limit-reset".into(), "0".into())],
                        body: String::new(),
                    });
                }
            }
            if self.status != 200 {
                return Ok(HttpResponse {
                    status: self.status,
                    headers: vec![],
                    body: String::new(),
                });
            }
            let served: Vec<String> = ids
                .into_iter()
                .filter(|id| !self.missing.contains(id))
                .collect();
            Ok(HttpResponse {
                status: 200,
                headers: vec![],
                body: body_for(&served),
            })
        }
    }

    #[test]
    fn batches_of_at_most_100() {
        let ids: Vec<u64> = (1..=250).collect();
        let api = FakeApi::new();
        let out = hydrate_with(&index_of(&ids), &api, &live(), &|_| {}).unwrap();
        let mut calls = api.calls.lock().unwrap().clone();
        calls.sort_unstable();
        assert_eq!(calls, vec![50, 100, 100]);
        assert_eq!(out.requests, 3);
        assert_eq!(out.dataset.len(), 250);
        let got: Vec<_> = out.dataset.records.iter().map(|r| r.tweet_id.clone()).collect();
        let want: Vec<_> = ids.iter().map(|i| i.to_string()).collect();
        assert_eq!(got, want, "records come back in index order");
    }

    #[test]
    fn deleted_tweets_are_reported_not_found() {
        let mut api = FakeApi::new();
        api.missing = vec!["2".into(), "3".into()];
        let out = hydrate_with(&index_of(&[1, 2, 3]), &api, &live(), &|_| {}).unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.not_found, vec!["2".to_string(), "3".to_string()]);
    }

    #[test]
    fn rate_limit_is_retried_after_sleeping() {
        let api = FakeApi::new();
        *api.throttle_first.lock().unwrap() = 2;
        let sleeps = Mutex::new(0);
        let mut cfg = live();
        cfg.parallelism = 1;
        let out = hydrate_with(&index_of(&[1, 2]), &api, &cfg, &|_| {
            *sleeps.lock().unwrap() += 1
        })
        .unwrap();
        assert_eq!(out.dataset.len(), 2);
        assert_eq!(*sleeps.lock().unwrap(), 2);
        assert_eq!(out.requests, 3);
    }

    #[test]
    fn persistent_rate_limit_gives_partial_result_with_errors() {
        let api = FakeApi::new();
        *api.throttle_first.lock().unwrap() = 100;
        let out = hydrate_with(&index_of(&[1, 2]), &api, &live(), &|_| {}).unwrap();
        assert!(out.dataset.is_empty());
        assert_eq!(out.failed, vec!["1".to_string(), "2".to_string()]);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.requests, 6, "one attempt plus five retries");
    }

    #[test]
    fn unauthorized_is_an_error() {
        let mut api = FakeApi::new();
        api.status = 401;
        let err = hydrate_with(&index_of(&[1]), &api, &live(), &|_| {}).unwrap_err();
        assert!(matches!(err, CorpusError::AuthenticationFailed { status: 401 }));
    }

    #[test]
    fn missing_token_is_an_error() {
        let mut cfg = live();
        cfg.bearer_token = None;
        let err = hydrate_with(&index_of(&[1]), &FakeApi::new(), &cfg, &|_| {}).unwrap_err();
        assert!(matches!(err, CorpusError::MissingCredential));
    }

    #[test]
    fn lookup_response_maps_entities_and_user() {
        let records = parse_lookup_response(&body_for(&["5".into()]), live().collected_at).unwrap();
        let r = &records[0];
        assert_eq!(r.hashtags, vec!["covid"]);
        assert_eq!(r.user_mentions, vec!["who"]);
        assert_eq!(r.urls, vec!["https://who.int"]);
        assert_eq!(r.retweet_count, 3);
        assert_eq!(r.user_name, "Ana");
        assert_eq!(r.user_location, "Leeds");
        assert!(r.user_verified);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn rate_limit_wait_uses_reset_header() {
        let now = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let resp = HttpResponse {
            status: 429,
            headers: vec![(
                "x-rate-limit-reset".into(),
                (now.timestamp() + 30).to_string(),
            )],
            body: String::new(),
        };
        assert_eq!(rate_limit_wait(&resp, now, 0), Duration::from_secs(31));
    }

    #[test]
    fn index_labels_override_fixture_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        let mut rec = crate::corpus::tests::record("111", "x", Label::Real);
        rec.post_kind = PostKind::Reply;
        let mut other = crate::corpus::tests::record("222", "y", Label::Real);
        other.claim_kind = ClaimKind::NewsArticle;
        crate::corpus::write_records(std::fs::File::create(&path).unwrap(), &[rec, other]).unwrap();
        let cfg = HydrationConfig {
            mode: HydrationMode::Fixture(path.clone()),
        };
        let out = hydrate(&index_of(&[111, 222]), &cfg).unwrap();
        assert_eq!(out.dataset.len(), 2);
        assert!(out.not_found.is_empty());
        assert!(out.dataset.records.iter().all(|r| r.label == Label::Fake));

        let partial = hydrate(&index_of(&[111, 333, 444]), &cfg).unwrap();
        assert_eq!(partial.dataset.len(), 1);
        assert_eq!(partial.not_found.len(), 2);

        let again = hydrate(&index_of(&[111, 333, 444]), &cfg).unwrap();
        assert_eq!(partial, again);
    }

    #[test]
    fn malformed_fixture_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"tweet_id\": \"1\"}\n").unwrap();
        let cfg = HydrationConfig {
            mode: HydrationMode::Fixture(path),
        };
        assert!(matches!(
            hydrate(&index_of(&[1]), &cfg),
            Err(CorpusError::MalformedFixture { line: 1, .. })
        ));
        let cfg = HydrationConfig {
            mode: HydrationMode::Fixture(dir.path().join("missing.jsonl")),
        };
        assert!(matches!(
            hydrate(&index_of(&[1]), &cfg),
            Err(CorpusError::Io { .. })
        ));
    }
}
