//! Page scoring through a pluggable [`Scorer`]: an HTTP client for the
//! scoring service and a deterministic offline stub.
//!
//! Wire protocol: `POST {base}/score` with `{"texts":[...]}` answers
//! `{"scores":[...],"token_counts":[...],"scorer_id":"..."}`;
//! `GET {base}/healthz` answers `{"status":"ok"}`.

use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::fetcher::millis;
use crate::http::{HttpClient, RequestOptions, TransportError};
use crate::util::hash64;

/// Client-side cap on characters sent per text (about 512 tokens of
/// English). The service applies its own exact token truncation.
pub const CLIENT_CHAR_CAP: usize = 4096;

pub const STUB_SCORER_ID: &str = "stub";

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("text {0} is empty")]
    EmptyText(usize),
    #[error("scorer rejected batch starting at text {index} with status {status}: {body}")]
    ScorerRejected {
        index: usize,
        status: u16,
        body: String,
    },
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageScore {
    pub url: Url,
    /// Lower means more LLM-like.
    pub score: f64,
    pub token_count: u32,
    pub scorer_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub score: f64,
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBatch {
    pub scores: Vec<TextScore>,
    pub scorer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
    pub token_counts: Vec<u32>,
    pub scorer_id: String,
}

pub trait Scorer: Send + Sync {
    /// Scores every text, preserving input order.
    fn score_texts(&self, texts: &[String]) -> Result<ScoredBatch, ScoreError>;

    fn health_check(&self) -> Result<(), ScoreError> {
        Ok(())
    }
}

/// Prefix of `text` sent to the scorer.
pub fn truncate_for_scoring(text: &str) -> &str {
    match text.char_indices().nth(CLIENT_CHAR_CAP) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

fn check_nonempty(texts: &[String]) -> Result<(), ScoreError> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(i) => Err(ScoreError::EmptyText(i)),
        None => Ok(()),
    }
}

/// Deterministic stand-in for the detector, in `(0.41, 1.38)`.
///
/// Let `r` be the fraction of distinct character trigrams in the lowercased
/// text (1 when there are none) and `j` a fixed-seed hash of the text mapped
/// to `[0, 1)`. Then `score = 0.41 + 0.97 * (0.95 r + 0.05 j)`.
/// Repetitive text scores low, varied text high, so synthetic corpora can
/// aim at a band by controlling word repetition.
pub fn stub_score(text: &str) -> f64 {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let r = if chars.len() < 3 {
        1.0
    } else {
        let mut buf = [0u8; 12];
        let grams: Vec<u64> = chars
            .windows(3)
            .map(|w| {
                let mut n = 0;
                for c in w {
                    n += c.encode_utf8(&mut buf[n..]).len();
                }
                hash64(&buf[..n])
            })
            .collect();
        let distinct: HashSet<u64> = grams.iter().copied().collect();
        distinct.len() as f64 / grams.len() as f64
    };
    let j = (hash64(text.as_bytes()) >> 11) as f64 / (1u64 << 53) as f64;
    0.41 + 0.97 * (0.95 * r + 0.05 * j)
}

fn stub_tokens(text: &str) -> u32 {
    text.split_whitespace().count().clamp(1, 512) as u32
}

/// Offline scorer backed by [`stub_score`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StubScorer;

impl Scorer for StubScorer {
    fn score_texts(&self, texts: &[String]) -> Result<ScoredBatch, ScoreError> {
        check_nonempty(texts)?;
        Ok(ScoredBatch {
            scores: texts
                .iter()
                .map(|t| {
                    let t = truncate_for_scoring(t);
                    TextScore {
                        score: stub_score(t),
                        token_count: stub_tokens(t),
                    }
                })
                .collect(),
            scorer_id: STUB_SCORER_ID.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerEndpoint {
    pub base_url: Url,
    pub batch_size: usize,
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub request_timeout: Duration,
    /// First retry delay; doubles on every further retry.
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    /// Batches in flight to this endpoint across all callers.
    pub max_inflight: usize,
}

impl Default for ScorerEndpoint {
    fn default() -> Self {
        ScorerEndpoint {
            base_url: Url::parse("http://127.0.0.1:8000/").expect("valid constant"),
            batch_size: 8,
            max_retries: 3,
            request_timeout: Duration::from_secs(120),
            backoff_base: Duration::from_secs(1),
            max_inflight: 4,
        }
    }
}

impl ScorerEndpoint {
    fn join(&self, path: &str) -> Url {
        let mut base = self.base_url.clone();
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        base.join(path).expect("relative path joins")
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// HTTP client for the scoring service.
pub struct HttpScorer {
    endpoint: ScorerEndpoint,
    client: Arc<dyn HttpClient>,
    permits: Permits,
}

impl HttpScorer {
    pub fn new(endpoint: ScorerEndpoint, client: Arc<dyn HttpClient>) -> Self {
        let n = endpoint.max_inflight.max(1);
        HttpScorer {
            endpoint,
            client,
            permits: Permits {
                free: Mutex::new(n),
                cv: Condvar::new(),
            },
        }
    }

    fn options(&self) -> RequestOptions {
        RequestOptions {
            timeout: self.endpoint.request_timeout,
            max_body_bytes: 16 * 1024 * 1024,
            ..RequestOptions::default()
        }
    }

    fn score_batch(&self, start: usize, texts: &[String]) -> Result<ScoreResponse, ScoreError> {
        let url = self.endpoint.join("score");
        let body = serde_json::to_vec(&ScoreRequest {
            texts: texts
                .iter()
                .map(|t| truncate_for_scoring(t).to_owned())
                .collect(),
        })
        .expect("strings serialize");
        let mut last_err = String::new();
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.endpoint.backoff_base * 2u32.saturating_pow(attempt - 1));
            }
            let result = {
                let _permit = self.permits.acquire();
                self.client.post_json(&url, &body, &self.options())
            };
            match result {
                Ok(resp) if resp.status == 200 => return parse_response(&resp.body, texts.len()),
                Ok(resp) if (400..500).contains(&resp.status) => {
                    return Err(ScoreError::ScorerRejected {
                        index: start,
                        status: resp.status,
                        body: String::from_utf8_lossy(&resp.body).into_owned(),
                    })
                }
                Ok(resp) => last_err = format!("status {}", resp.status),
                Err(TransportError::Timeout) => last_err = "timeout".into(),
                Err(e) => last_err = e.to_string(),
            }
            log::debug!("scorer batch at {start} failed (attempt {attempt}): {last_err}");
        }
        Err(ScoreError::ScorerUnavailable(format!(
            "{} retries exhausted: {last_err}",
            self.endpoint.max_retries
        )))
    }
}

fn parse_response(body: &[u8], expected: usize) -> Result<ScoreResponse, ScoreError> {
    let resp: ScoreResponse =
        serde_json::from_slice(body).map_err(|e| ScoreError::Protocol(e.to_string()))?;
    if resp.scores.len() != expected || resp.token_counts.len() != expected {
        return Err(ScoreError::Protocol(format!(
            "sent {expected} texts, got {} scores and {} token counts",
            resp.scores.len(),
            resp.token_counts.len()
        )));
    }
    if let Some(bad) = resp.scores.iter().find(|s| !s.is_finite() || **s <= 0.0) {
        return Err(ScoreError::Protocol(format!(
            "score {bad} is not positive and finite"
        )));
    }
    if resp.token_counts.contains(&0) {
        return Err(ScoreError::Protocol("token count of zero".into()));
    }
    Ok(resp)
}

impl Scorer for HttpScorer {
    fn score_texts(&self, texts: &[String]) -> Result<ScoredBatch, ScoreError> {
        check_nonempty(texts)?;
        let size = self.endpoint.batch_size.max(1);
        // One slot per batch: a retried batch replaces its slot, never appends.
        let mut slots: Vec<Option<ScoreResponse>> = vec![None; texts.len().div_ceil(size)];
        for (b, chunk) in texts.chunks(size).enumerate() {
            slots[b] = Some(self.score_batch(b * size, chunk)?);
        }
        let mut scores = Vec::with_capacity(texts.len());
        let mut scorer_id = String::new();
        for resp in slots.into_iter().flatten() {
            if scorer_id.is_empty() {
                scorer_id = resp.scorer_id.clone();
            } else if scorer_id != resp.scorer_id {
                return Err(ScoreError::Protocol(format!(
                    "scorer_id changed mid-request: {scorer_id} then {}",
                    resp.scorer_id
                )));
            }
            scores.extend(
                resp.scores
                    .iter()
                    .zip(&resp.token_counts)
                    .map(|(s, t)| TextScore {
                        score: *s,
                        token_count: *t,
                    }),
            );
        }
        Ok(ScoredBatch { scores, scorer_id })
    }

    /// `GET {base}/healthz` must answer 200 with `{"status":"ok"}`.
    fn health_check(&self) -> Result<(), ScoreError> {
        let url = self.endpoint.join("healthz");
        let resp = self
            .client
            .get(&url, &self.options())
            .map_err(|e| ScoreError::ScorerUnavailable(e.to_string()))?;
        #[derive(Deserialize)]
        struct Health {
            status: String,
        }
        match serde_json::from_slice::<Health>(&resp.body) {
            Ok(h) if resp.status == 200 && h.status == "ok" => Ok(()),
            _ => Err(ScoreError::ScorerUnavailable(format!(
                "health check answered {}",
                resp.status
            ))),
        }
    }
}
