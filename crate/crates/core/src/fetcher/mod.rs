//! Polite page fetching: per-host spacing, robots.txt, manual redirect
//! following, body caps, archive snapshots and an on-disk cache.

mod cache;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use texting_robots::Robot;
use thiserror::Error;
use url::Url;

use crate::http::{HttpClient, HttpResponse, RequestOptions, TransportError};

pub use cache::PageCache;

pub const DEFAULT_USER_AGENT: &str =
    "llmsite-research/0.1 (+site-level LLM content measurement; static fetcher)";

pub const DEFAULT_ARCHIVE_BASE: &str = "https://web.archive.org";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("timed out fetching {0}")]
    Timeout(Url),
    #[error("transport failure for {url}: {source}")]
    Transport { url: Url, source: TransportError },
    #[error("robots.txt disallows {0}")]
    RobotsDenied(Url),
    #[error("too many redirects starting at {0}")]
    TooManyRedirects(Url),
    #[error("archive has no snapshot for {0}")]
    SnapshotMissing(Url),
    #[error("invalid url: {0}")]
    InvalidUrl(String),
    #[error("capture timestamp must be 14 digits, got {0:?}")]
    InvalidTimestamp(String),
    #[error("renderer failed: {0}")]
    Render(String),
}

impl FetchError {
    /// DNS failure: the host itself does not exist.
    pub fn is_host_not_found(&self) -> bool {
        matches!(
            self,
            FetchError::Transport {
                source: TransportError::HostNotFound(_),
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchPolicy {
    #[serde(with = "millis")]
    pub per_host_min_delay: Duration,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_redirects: u32,
    pub max_body_bytes: usize,
    pub user_agent: String,
    pub respect_robots: bool,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            per_host_min_delay: Duration::from_secs(2),
            timeout: Duration::from_secs(30),
            max_redirects: 5,
            max_body_bytes: 5 * 1024 * 1024,
            user_agent: DEFAULT_USER_AGENT.to_owned(),
            respect_robots: true,
        }
    }
}

pub(crate) mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchedPage {
    pub request_url: Url,
    pub final_url: Url,
    pub status: u16,
    pub content_type: String,
    #[serde(skip)]
    pub body: Vec<u8>,
    pub fetched_at: DateTime<Utc>,
    pub from_cache: bool,
    pub truncated: bool,
}

impl FetchedPage {
    pub fn is_html(&self) -> bool {
        let ct = self.content_type.to_ascii_lowercase();
        ct.contains("text/html") || ct.contains("application/xhtml")
    }
}

/// Anything that can turn a URL into a fetched page. The sampler uses this
/// to read robots.txt and sitemaps.
pub trait PageSource: Send + Sync {
    fn get(&self, url: &Url) -> Result<FetchedPage, FetchError>;

    /// Index/API request: polite but exempt from robots.txt and caching.
    fn get_index(&self, url: &Url) -> Result<FetchedPage, FetchError> {
        self.get(url)
    }
}

/// Post-processing hook for fetched HTML, e.g. a headless-browser renderer
/// that replaces the static body with the rendered DOM.
pub trait Renderer: Send + Sync {
    fn render(&self, page: FetchedPage) -> Result<FetchedPage, FetchError>;
}

/// Hands back the static HTML unchanged.
pub struct StaticRenderer;

impl Renderer for StaticRenderer {
    fn render(&self, page: FetchedPage) -> Result<FetchedPage, FetchError> {
        Ok(page)
    }
}

/// Shared, thread-safe fetcher.
pub struct Fetcher {
    policy: FetchPolicy,
    client: Arc<dyn HttpClient>,
    cache: Option<PageCache>,
    renderer: Arc<dyn Renderer>,
    archive_base: Url,
    next_slot: Mutex<HashMap<String, Instant>>,
    robots: Mutex<HashMap<String, Arc<RobotsRules>>>,
}

#[derive(Debug)]
enum RobotsRules {
    AllowAll,
    DisallowAll,
    Parsed(Box<Robot>),
}

impl Fetcher {
    pub fn new(policy: FetchPolicy, client: Arc<dyn HttpClient>) -> Self {
        Fetcher {
            policy,
            client,
            cache: None,
            renderer: Arc::new(StaticRenderer),
            archive_base: Url::parse(DEFAULT_ARCHIVE_BASE).expect("valid constant"),
            next_slot: Mutex::new(HashMap::new()),
            robots: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cache(mut self, cache: PageCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_renderer(mut self, renderer: Arc<dyn Renderer>) -> Self {
        self.renderer = renderer;
        self
    }

    pub fn with_archive_base(mut self, base: Url) -> Self {
        self.archive_base = base;
        self
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    pub fn client(&self) -> &Arc<dyn HttpClient> {
        &self.client
    }

    fn options(&self) -> RequestOptions {
        RequestOptions {
            timeout: self.policy.timeout,
            max_body_bytes: self.policy.max_body_bytes,
            user_agent: self.policy.user_agent.clone(),
        }
    }

    /// Blocks until this host's next request slot. Slots for one host are
    /// at least `per_host_min_delay` apart.
    fn wait_turn(&self, url: &Url) {
        let delay = self.policy.per_host_min_delay;
        if delay.is_zero() {
            return;
        }
        let key = host_key(url);
        let slot = {
            let mut table = self.next_slot.lock().expect("politeness table poisoned");
            let now = Instant::now();
            let slot = table.get(&key).map_or(now, |next| (*next).max(now));
            table.insert(key, slot + delay);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }

    fn raw_get(&self, url: &Url) -> Result<HttpResponse, FetchError> {
        self.wait_turn(url);
        self.client
            .get(url, &self.options())
            .map_err(|source| match source {
                TransportError::Timeout => FetchError::Timeout(url.clone()),
                source => FetchError::Transport {
                    url: url.clone(),
                    source,
                },
            })
    }

    fn robots_for(&self, url: &Url) -> Arc<RobotsRules> {
        let origin = url.origin().ascii_serialization();
        if let Some(r) = self
            .robots
            .lock()
            .expect("robots table poisoned")
            .get(&origin)
        {
            return r.clone();
        }
        let rules = match Url::parse(&format!("{origin}/robots.txt")) {
            Ok(robots_url) => match self.raw_get(&robots_url) {
                Ok(resp) if resp.is_success() => {
                    match Robot::new(robots_token(&self.policy.user_agent), &resp.body) {
                        Ok(r) => RobotsRules::Parsed(Box::new(r)),
                        Err(_) => RobotsRules::AllowAll,
                    }
                }
                Ok(resp) if resp.status >= 500 => RobotsRules::DisallowAll,
                _ => RobotsRules::AllowAll,
            },
            Err(_) => RobotsRules::AllowAll,
        };
        let rules = Arc::new(rules);
        self.robots
            .lock()
            .expect("robots table poisoned")
            .entry(origin)
            .or_insert(rules)
            .clone()
    }

    fn allowed(&self, url: &Url) -> bool {
        if url.path() == "/robots.txt" {
            return true;
        }
        match &*self.robots_for(url) {
            RobotsRules::AllowAll => true,
            RobotsRules::DisallowAll => false,
            RobotsRules::Parsed(r) => r.allowed(url.as_str()),
        }
    }

    /// Follows up to `max_redirects` redirects, checking robots.txt on each
    /// hop when `check_robots` is set.
    fn follow(&self, start: &Url, check_robots: bool) -> Result<(Url, HttpResponse), FetchError> {
        let mut current = start.clone();
        let mut seen = HashSet::new();
        let mut hops = 0;
        loop {
            if check_robots && !self.allowed(&current) {
                return Err(FetchError::RobotsDenied(current));
            }
            seen.insert(current.to_string());
            let resp = self.raw_get(&current)?;
            let location = match resp.status {
                301 | 302 | 303 | 307 | 308 => resp.header("location"),
                _ => None,
            };
            let Some(location) = location else {
                return Ok((current, resp));
            };
            let next = current
                .join(location)
                .map_err(|e| FetchError::InvalidUrl(format!("{location}: {e}")))?;
            hops += 1;
            if hops > self.policy.max_redirects || seen.contains(next.as_str()) {
                return Err(FetchError::TooManyRedirects(start.clone()));
            }
            current = next;
        }
    }

    fn build_page(&self, request_url: &Url, final_url: Url, resp: HttpResponse) -> FetchedPage {
        FetchedPage {
            request_url: request_url.clone(),
            final_url,
            status: resp.status,
            content_type: resp.header("content-type").unwrap_or_default().to_owned(),
            truncated: resp.truncated,
            body: resp.body,
            fetched_at: Utc::now(),
            from_cache: false,
        }
    }

    fn cached_or(
        &self,
        url: &Url,
        ts: Option<&str>,
        fetch: impl FnOnce() -> Result<FetchedPage, FetchError>,
    ) -> Result<FetchedPage, FetchError> {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.lookup(url, ts)) {
            return Ok(hit);
        }
        let page = fetch()?;
        if let (Some(cache), true) = (&self.cache, (200..300).contains(&page.status)) {
            if let Err(e) = cache.store(&page, ts) {
                log::warn!("cache store failed for {url}: {e}");
            }
        }
        Ok(page)
    }

    /// Live fetch of `url`.
    pub fn fetch(&self, url: &Url) -> Result<FetchedPage, FetchError> {
        check_http(url)?;
        self.cached_or(url, None, || {
            let (final_url, resp) = self.follow(url, self.policy.respect_robots)?;
            let page = self.build_page(url, final_url, resp);
            if page.is_html() {
                self.renderer.render(page)
            } else {
                Ok(page)
            }
        })
    }

    /// Snapshot URL for a raw archived capture.
    pub fn snapshot_url(&self, url: &Url, ts: &str) -> Result<Url, FetchError> {
        validate_timestamp(ts)?;
        let base = self.archive_base.as_str().trim_end_matches('/');
        Url::parse(&format!("{base}/web/{ts}id_/{url}"))
            .map_err(|e| FetchError::InvalidUrl(e.to_string()))
    }

    /// Fetches the unmodified archived capture of `url` at `ts`.
    /// robots.txt is not consulted for archive fetches.
    pub fn fetch_archived(&self, url: &Url, ts: &str) -> Result<FetchedPage, FetchError> {
        check_http(url)?;
        let snapshot = self.snapshot_url(url, ts)?;
        self.cached_or(url, Some(ts), || {
            let (final_url, resp) = self.follow(&snapshot, false)?;
            if resp.status == 404 {
                return Err(FetchError::SnapshotMissing(url.clone()));
            }
            let page = self.build_page(url, final_url, resp);
            if page.is_html() {
                self.renderer.render(page)
            } else {
                Ok(page)
            }
        })
    }
}

impl PageSource for Fetcher {
    fn get(&self, url: &Url) -> Result<FetchedPage, FetchError> {
        self.fetch(url)
    }

    fn get_index(&self, url: &Url) -> Result<FetchedPage, FetchError> {
        check_http(url)?;
        let (final_url, resp) = self.follow(url, false)?;
        Ok(self.build_page(url, final_url, resp))
    }
}

fn check_http(url: &Url) -> Result<(), FetchError> {
    match url.scheme() {
        "http" | "https" if url.has_host() => Ok(()),
        _ => Err(FetchError::InvalidUrl(url.to_string())),
    }
}

pub fn validate_timestamp(ts: &str) -> Result<(), FetchError> {
    if ts.len() == 14 && ts.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err(FetchError::InvalidTimestamp(ts.to_owned()))
    }
}

/// Product token of a user-agent string, as robots.txt groups name it.
fn robots_token(user_agent: &str) -> &str {
    user_agent
        .split(|c: char| c == '/' || c.is_whitespace())
        .next()
        .unwrap_or(user_agent)
}

/// Politeness key: host plus effective port.
pub fn host_key(url: &Url) -> String {
    format!(
        "{}:{}",
        url.host_str().unwrap_or_default().to_ascii_lowercase(),
        url.port_or_known_default().unwrap_or(0)
    )
}
