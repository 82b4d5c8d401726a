//! Listing client for the submission API.
//!
//! Network access goes through [`Transport`] so the client can be driven from
//! recorded transcripts; waits go through [`Sleeper`] so backoff is observable
//! in tests.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{AuthorProfile, Corpus, CorpusError, Post};

/// Environment variable holding the OAuth bearer token for live fetches.
pub const BEARER_TOKEN_ENV: &str = "REDDIT_BEARER_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub retry_after: Option<Duration>,
    pub body: String,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait Transport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError>;
}

pub trait Sleeper {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListingTab {
    Hot,
    New,
    Controversial,
    Gilded,
    Top,
}

impl ListingTab {
    pub fn as_str(self) -> &'static str {
        match self {
            ListingTab::Hot => "hot",
            ListingTab::New => "new",
            ListingTab::Controversial => "controversial",
            ListingTab::Gilded => "gilded",
            ListingTab::Top => "top",
        }
    }
}

impl FromStr for ListingTab {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hot" => Ok(ListingTab::Hot),
            "new" => Ok(ListingTab::New),
            "controversial" => Ok(ListingTab::Controversial),
            "gilded" => Ok(ListingTab::Gilded),
            "top" => Ok(ListingTab::Top),
            other => Err(format!(
                "unknown tab {other:?} (expected hot, new, controversial, gilded or top)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`,
    /// capped at `max_delay`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32
            .checked_shl(attempt.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.base_delay
            .checked_mul(factor)
            .unwrap_or(self.max_delay)
            .min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub base_url: String,
    pub retry: RetryPolicy,
    /// Maximum items requested per listing page (the API caps this at 100).
    pub page_size: usize,
    /// Time window for `top` and `controversial`.
    pub time_window: String,
    /// Overrides the wall-clock snapshot time; used for reproducible fetches.
    pub snapshot_utc: Option<i64>,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            base_url: "https://oauth.reddit.com".to_string(),
            retry: RetryPolicy::default(),
            page_size: 100,
            time_window: "all".to_string(),
            snapshot_utc: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("request to {url} failed after {attempts} attempts: {last}")]
    Transport {
        url: String,
        attempts: u32,
        last: String,
    },
    #[error("request to {url} returned HTTP {status}")]
    Http { url: String, status: u16 },
    #[error("unparsable payload from {url}: {message}")]
    Unparsable { url: String, message: String },
    #[error("fetched data violates corpus invariants: {0}")]
    Corpus(#[from] CorpusError),
}

#[derive(Deserialize)]
struct Listing {
    data: ListingData,
}

#[derive(Deserialize)]
struct ListingData {
    #[serde(default)]
    children: Vec<Thing>,
    after: Option<String>,
}

#[derive(Deserialize)]
struct Thing {
    kind: String,
    data: serde_json::Value,
}

#[derive(Deserialize)]
struct Submission {
    id: String,
    subreddit: String,
    title: String,
    #[serde(default)]
    selftext: String,
    url: Option<String>,
    #[serde(default)]
    is_self: bool,
    created_utc: f64,
    #[serde(default)]
    ups: i64,
    #[serde(default)]
    downs: i64,
    #[serde(default)]
    score: i64,
    #[serde(default)]
    num_comments: i64,
    #[serde(default)]
    num_crossposts: i64,
    author: String,
    author_fullname: Option<String>,
}

#[derive(Deserialize)]
struct AccountAbout {
    data: Account,
}

#[derive(Deserialize)]
struct Account {
    id: String,
    name: String,
    created_utc: f64,
    #[serde(default)]
    link_karma: i64,
    #[serde(default)]
    comment_karma: i64,
    has_verified_email: Option<bool>,
    #[serde(default)]
    verified: bool,
    #[serde(default)]
    is_mod: bool,
}

fn non_negative(v: i64) -> u64 {
    v.max(0) as u64
}

impl Submission {
    fn into_post(self, author_id: String) -> Post {
        let url = if self.is_self {
            None
        } else {
            self.url.filter(|u| !u.trim().is_empty())
        };
        Post {
            id: self.id,
            subreddit: self.subreddit,
            title: self.title,
            body: self.selftext,
            url,
            created_utc: self.created_utc.floor() as i64,
            ups: non_negative(self.ups),
            downs: non_negative(self.downs),
            score: self.score,
            num_comments: non_negative(self.num_comments),
            num_crossposts: non_negative(self.num_crossposts),
            author_id,
        }
    }
}

enum Fetched {
    Body(String),
    Status(u16),
}

struct Client<'a> {
    transport: &'a dyn Transport,
    sleeper: &'a dyn Sleeper,
    config: &'a FetchConfig,
}

impl Client<'_> {
    /// Retries transport errors and 5xx with capped exponential backoff, and
    /// 429 after the server-advised delay. Other statuses are returned.
    fn get(&self, url: &str) -> Result<Fetched, FetchError> {
        let policy = &self.config.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let (delay, last) = match self.transport.get(url) {
                Ok(r) if (200..300).contains(&r.status) => return Ok(Fetched::Body(r.body)),
                Ok(r) if r.status == 429 => (
                    r.retry_after.unwrap_or_else(|| policy.backoff(attempt)),
                    "rate limited (HTTP 429)".to_string(),
                ),
                Ok(r) if r.status >= 500 => (policy.backoff(attempt), format!("HTTP {}", r.status)),
                Ok(r) => return Ok(Fetched::Status(r.status)),
                Err(e) => (policy.backoff(attempt), e.0),
            };
            if attempt >= policy.max_attempts.max(1) {
                return Err(FetchError::Transport {
                    url: url.to_string(),
                    attempts: attempt,
                    last,
                });
            }
            log::warn!("{url}: {last}; retrying in {delay:?}");
            self.sleeper.sleep(delay);
        }
    }

    fn listing_url(
        &self,
        subreddit: &str,
        tab: ListingTab,
        n: usize,
        after: Option<&str>,
    ) -> String {
        let mut url = format!(
            "{}/r/{}/{}?limit={}&raw_json=1",
            self.config.base_url.trim_end_matches('/'),
            subreddit,
            tab.as_str(),
            n
        );
        if matches!(tab, ListingTab::Top | ListingTab::Controversial) {
            url.push_str("&t=");
            url.push_str(&self.config.time_window);
        }
        if let Some(a) = after {
            url.push_str("&after=");
            url.push_str(a);
        }
        url
    }

    fn listing(
        &self,
        subreddit: &str,
        tab: ListingTab,
        limit: usize,
    ) -> Result<Vec<Submission>, FetchError> {
        let mut out = Vec::new();
        let mut after: Option<String> = None;
        while out.len() < limit {
            let n = (limit - out.len()).min(self.config.page_size.max(1));
            let url = self.listing_url(subreddit, tab, n, after.as_deref());
            let body = match self.get(&url)? {
                Fetched::Body(b) => b,
                Fetched::Status(status) => return Err(FetchError::Http { url, status }),
            };
            let listing: Listing =
                serde_json::from_str(&body).map_err(|e| FetchError::Unparsable {
                    url: url.clone(),
                    message: e.to_string(),
                })?;
            let page_len = listing.data.children.len();
            for thing in listing.data.children.into_iter().filter(|t| t.kind == "t3") {
                let sub: Submission =
                    serde_json::from_value(thing.data).map_err(|e| FetchError::Unparsable {
                        url: url.clone(),
                        message: e.to_string(),
                    })?;
                if out.len() < limit {
                    out.push(sub);
                }
            }
            after = listing.data.after;
            if page_len == 0 || after.is_none() {
                break;
            }
        }
        Ok(out)
    }

    fn account(&self, name: &str) -> Result<Option<AuthorProfile>, FetchError> {
        let url = format!(
            "{}/user/{}/about?raw_json=1",
            self.config.base_url.trim_end_matches('/'),
            name
        );
        let body = match self.get(&url)? {
            Fetched::Body(b) => b,
            Fetched::Status(403 | 404) => {
                log::warn!("account {name:?} unavailable; its posts are skipped");
                return Ok(None);
            }
            Fetched::Status(status) => return Err(FetchError::Http { url, status }),
        };
        let about: AccountAbout = match serde_json::from_str(&body) {
            Ok(a) => a,
            Err(e) => {
                // suspended accounts come back without creation time or id
                let value: serde_json::Value =
                    serde_json::from_str(&body).map_err(|_| FetchError::Unparsable {
                        url: url.clone(),
                        message: e.to_string(),
                    })?;
                if value.pointer("/data/is_suspended") == Some(&serde_json::Value::Bool(true)) {
                    log::warn!("account {name:?} suspended; its posts are skipped");
                    return Ok(None);
                }
                return Err(FetchError::Unparsable {
                    url,
                    message: e.to_string(),
                });
            }
        };
        let a = about.data;
        Ok(Some(AuthorProfile {
            author_id: format!("t2_{}", a.id),
            name: a.name,
            created_utc: a.created_utc.floor() as i64,
            link_karma: a.link_karma,
            comment_karma: a.comment_karma,
            has_verified_email: a.has_verified_email.unwrap_or(false),
            is_verified: a.verified,
            is_moderator: a.is_mod,
        }))
    }
}

fn now_utc() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

/// Fetches up to `limit` submissions per (subreddit, tab) listing plus the
/// profile of every submitter, and assembles a validated corpus.
///
/// Submissions seen in several listings are kept once. Posts by deleted,
/// suspended or otherwise unavailable accounts are skipped.
pub fn fetch_live(
    subreddits: &[String],
    tabs: &[ListingTab],
    limit: usize,
    transport: &dyn Transport,
    sleeper: &dyn Sleeper,
    config: &FetchConfig,
) -> Result<Corpus, FetchError> {
    let client = Client {
        transport,
        sleeper,
        config,
    };
    let mut submissions: BTreeMap<String, Submission> = BTreeMap::new();
    if limit > 0 {
        let tabs: BTreeSet<ListingTab> = tabs.iter().copied().collect();
        for sub in subreddits {
            for &tab in &tabs {
                for s in client.listing(sub, tab, limit)? {
                    submissions.entry(s.id.clone()).or_insert(s);
                }
            }
        }
    }

    let names: BTreeSet<String> = submissions
        .values()
        .filter(|s| s.author_fullname.is_some() && s.author != "[deleted]")
        .map(|s| s.author.clone())
        .collect();
    let mut by_name: BTreeMap<String, AuthorProfile> = BTreeMap::new();
    for name in names {
        if let Some(profile) = client.account(&name)? {
            by_name.insert(name, profile);
        }
    }

    let mut posts = Vec::new();
    for (_, s) in submissions {
        let Some(profile) = by_name.get(&s.author) else {
            log::warn!("skipping post {} without an available author", s.id);
            continue;
        };
        let author_id = profile.author_id.clone();
        posts.push(s.into_post(author_id));
    }
    let mut authors: BTreeMap<String, AuthorProfile> = BTreeMap::new();
    for p in by_name.into_values() {
        authors.insert(p.author_id.clone(), p);
    }
    let latest = posts
        .iter()
        .map(|p| p.created_utc)
        .chain(authors.values().map(|a| a.created_utc))
        .max()
        .unwrap_or(i64::MIN);
    let snapshot = config.snapshot_utc.unwrap_or_else(now_utc).max(latest);
    Ok(Corpus::new(
        snapshot,
        posts,
        authors.into_values().collect(),
    )?)
}

/// Blocking HTTPS transport authenticating with a bearer token.
pub struct UreqTransport {
    agent: ureq::Agent,
    bearer_token: Option<String>,
    user_agent: String,
}

impl UreqTransport {
    pub fn new(bearer_token: Option<String>, user_agent: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        UreqTransport {
            agent,
            bearer_token,
            user_agent: user_agent.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.get(url).header("User-Agent", &self.user_agent);
        if let Some(token) = &self.bearer_token {
            req = req.header("Authorization", &format!("bearer {token}"));
        }
        let mut resp = req.call().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse {
            status,
            retry_after,
            body,
        })
    }
}

/// One recorded exchange. A string `body` is served verbatim; any other JSON
/// value is served as its serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub url: String,
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub retry_after_secs: Option<f64>,
    #[serde(default)]
    pub body: serde_json::Value,
}

fn ok_status() -> u16 {
    200
}

/// Replays recorded exchanges. Each entry answers one request for its URL, in
/// file order; a URL without a remaining entry is a transport failure.
pub struct TranscriptTransport {
    entries: Vec<TranscriptEntry>,
    state: Mutex<(Vec<bool>, Vec<String>)>,
}

impl TranscriptTransport {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let n = entries.len();
        TranscriptTransport {
            entries,
            state: Mutex::new((vec![false; n], Vec::new())),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    /// URLs requested so far, in order.
    pub fn requests(&self) -> Vec<String> {
        self.state.lock().expect("transcript lock").1.clone()
    }
}

impl Transport for TranscriptTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let mut state = self.state.lock().expect("transcript lock");
        state.1.push(url.to_string());
        let idx = self
            .entries
            .iter()
            .enumerate()
            .position(|(i, e)| !state.0[i] && e.url == url)
            .ok_or_else(|| TransportError(format!("no recorded response for {url}")))?;
        state.0[idx] = true;
        let e = &self.entries[idx];
        let body = match &e.body {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        Ok(HttpResponse {
            status: e.status,
            retry_after: e.retry_after_secs.map(Duration::from_secs_f64),
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    #[derive(Default)]
    struct RecordingSleeper(RefCell<Vec<Duration>>);

    impl Sleeper for RecordingSleeper {
        fn sleep(&self, d: Duration) {
            self.0.borrow_mut().push(d);
        }
    }

    struct AlwaysFailing(RefCell<usize>);

    impl Transport for AlwaysFailing {
        fn get(&self, _url: &str) -> Result<HttpResponse, TransportError> {
            *self.0.borrow_mut() += 1;
            Err(TransportError("connection refused".into()))
        }
    }

    fn config() -> FetchConfig {
        FetchConfig {
            base_url: "https://api.test".into(),
            snapshot_utc: Some(2_000_000_000),
            ..FetchConfig::default()
        }
    }

    fn submission(
        id: &str,
        author: &str,
        created: f64,
        url: Option<&str>,
        is_self: bool,
    ) -> serde_json::Value {
        serde_json::json!({"kind": "t3", "data": {
            "id": id, "subreddit": "netsec", "title": format!("title {id}"), "selftext": "",
            "url": url, "is_self": is_self, "created_utc": created, "ups": 10, "downs": 0,
            "score": 10, "num_comments": 2, "num_crossposts": 0,
            "author": author, "author_fullname": format!("t2_{author}")
        }})
    }

    fn about(name: &str) -> serde_json::Value {
        serde_json::json!({"kind": "t2", "data": {
            "id": name, "name": name, "created_utc": 1_500_000_000.0, "link_karma": 100,
            "comment_karma": 50, "has_verified_email": true, "verified": false, "is_mod": false
        }})
    }

    fn new_page_transcript() -> Vec<TranscriptEntry> {
        vec![
            TranscriptEntry {
                url: "https://api.test/r/netsec/new?limit=25&raw_json=1".into(),
                status: 200,
                retry_after_secs: None,
                body: serde_json::json!({"kind": "Listing", "data": {"after": null, "children": [
                    submission("b2", "bob", 1_900_000_100.0, None, true),
                    submission("a1", "alice", 1_900_000_000.5, Some("https://example.com/x"), false),
                ]}}),
            },
            TranscriptEntry {
                url: "https://api.test/user/alice/about?raw_json=1".into(),
                status: 200,
                retry_after_secs: None,
                body: about("alice"),
            },
            TranscriptEntry {
                url: "https://api.test/user/bob/about?raw_json=1".into(),
                status: 200,
                retry_after_secs: None,
                body: about("bob"),
            },
        ]
    }

    #[test]
    fn one_page_two_posts() {
        let t = TranscriptTransport::new(new_page_transcript());
        let s = RecordingSleeper::default();
        let c = fetch_live(
            &["netsec".into()],
            &[ListingTab::New],
            25,
            &t,
            &s,
            &config(),
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.snapshot_utc, 2_000_000_000);
        assert_eq!(c.posts[0].id, "a1");
        assert_eq!(c.posts[0].created_utc, 1_900_000_000);
        assert_eq!(c.posts[0].url.as_deref(), Some("https://example.com/x"));
        assert_eq!(c.posts[0].author_id, "t2_alice");
        assert_eq!(c.posts[1].url, None);
        assert!(c.authors["t2_alice"].has_verified_email);
        assert!(s.0.borrow().is_empty());
    }

    #[test]
    fn zero_limit_issues_no_requests() {
        let t = TranscriptTransport::new(Vec::new());
        let c = fetch_live(
            &["netsec".into()],
            &[ListingTab::Hot],
            0,
            &t,
            &RecordingSleeper::default(),
            &config(),
        )
        .unwrap();
        assert!(c.is_empty());
        assert!(t.requests().is_empty());
    }

    #[test]
    fn failing_transport_exhausts_retry_budget() {
        let t = AlwaysFailing(RefCell::new(0));
        let s = RecordingSleeper::default();
        let mut cfg = config();
        cfg.retry = RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(250),
        };
        let err = fetch_live(&["netsec".into()], &[ListingTab::Hot], 5, &t, &s, &cfg).unwrap_err();
        assert!(
            matches!(err, FetchError::Transport { attempts: 4, .. }),
            "{err}"
        );
        assert_eq!(*t.0.borrow(), 4);
        assert_eq!(
            *s.0.borrow(),
            vec![
                Duration::from_millis(100),
                Duration::from_millis(200),
                Duration::from_millis(250)
            ]
        );
    }

    #[test]
    fn rate_limit_honors_retry_after() {
        let mut entries = new_page_transcript();
        entries.insert(
            0,
            TranscriptEntry {
                url: entries[0].url.clone(),
                status: 429,
                retry_after_secs: Some(7.0),
                body: serde_json::Value::String(String::new()),
            },
        );
        let t = TranscriptTransport::new(entries);
        let s = RecordingSleeper::default();
        let c = fetch_live(
            &["netsec".into()],
            &[ListingTab::New],
            25,
            &t,
            &s,
            &config(),
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(*s.0.borrow(), vec![Duration::from_secs(7)]);
    }

    #[test]
    fn unparsable_payload_is_reported() {
        let mut entries = new_page_transcript();
        entries[0].body = serde_json::Value::String("<html>oops</html>".into());
        let t = TranscriptTransport::new(entries);
        let err = fetch_live(
            &["netsec".into()],
            &[ListingTab::New],
            25,
            &t,
            &RecordingSleeper::default(),
            &config(),
        )
        .unwrap_err();
        assert!(matches!(err, FetchError::Unparsable { .. }));
    }

    #[test]
    fn pagination_follows_after_and_dedups_tabs() {
        let page1 = TranscriptEntry {
            url: "https://api.test/r/netsec/hot?limit=2&raw_json=1".into(),
            status: 200,
            retry_after_secs: None,
            body: serde_json::json!({"data": {"after": "t3_b", "children": [
                submission("a", "alice", 1.0e9, None, true),
                submission("b", "alice", 1.1e9, None, true),
            ]}}),
        };
        let page2 = TranscriptEntry {
            url: "https://api.test/r/netsec/hot?limit=1&raw_json=1&after=t3_b".into(),
            status: 200,
            retry_after_secs: None,
            body: serde_json::json!({"data": {"after": "t3_c", "children": [
                submission("c", "alice", 1.2e9, None, true),
            ]}}),
        };
        let top = TranscriptEntry {
            url: "https://api.test/r/netsec/top?limit=2&raw_json=1&t=all".into(),
            status: 200,
            retry_after_secs: None,
            body: serde_json::json!({"data": {"after": null, "children": [
                submission("a", "alice", 1.0e9, None, true),
            ]}}),
        };
        let mut cfg = config();
        cfg.page_size = 2;
        let t = TranscriptTransport::new(vec![
            top,
            page2,
            page1,
            TranscriptEntry {
                url: "https://api.test/user/alice/about?raw_json=1".into(),
                status: 200,
                retry_after_secs: None,
                body: about("alice"),
            },
        ]);
        let c = fetch_live(
            &["netsec".into()],
            &[ListingTab::Top, ListingTab::Hot],
            3,
            &t,
            &RecordingSleeper::default(),
            &cfg,
        )
        .unwrap();
        let ids: Vec<_> = c.posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn unavailable_author_skips_posts() {
        let mut entries = new_page_transcript();
        entries[2].status = 404;
        entries[2].body = serde_json::json!({"error": 404});
        let t = TranscriptTransport::new(entries);
        let c = fetch_live(
            &["netsec".into()],
            &[ListingTab::New],
            25,
            &t,
            &RecordingSleeper::default(),
            &config(),
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.posts[0].id, "a1");
    }

    #[test]
    fn backoff_is_capped() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_millis(500));
        assert_eq!(p.backoff(3), Duration::from_secs(2));
        assert_eq!(p.backoff(40), Duration::from_secs(30));
    }
}
