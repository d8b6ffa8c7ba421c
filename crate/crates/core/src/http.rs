//! Blocking HTTP transport behind a small trait so the fetcher, the
//! sampler and the scorer client can be driven by test servers or by
//! alternative clients. Redirects are never followed here.

use std::io::Read;
use std::time::Duration;

use thiserror::Error;
use url::Url;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("host not found: {0}")]
    HostNotFound(String),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("transport error: {0}")]
    Other(String),
}

#[derive(Debug, Clone)]
pub struct RequestOptions {
    pub timeout: Duration,
    pub max_body_bytes: usize,
    pub user_agent: String,
}

impl Default for RequestOptions {
    fn default() -> Self {
        RequestOptions {
            timeout: Duration::from_secs(30),
            max_body_bytes: 5 * 1024 * 1024,
            user_agent: crate::fetcher::DEFAULT_USER_AGENT.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names are lowercase.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    /// The body was cut at `max_body_bytes`.
    pub truncated: bool,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

pub trait HttpClient: Send + Sync {
    fn get(&self, url: &Url, opts: &RequestOptions) -> Result<HttpResponse, TransportError>;

    fn post_json(
        &self,
        url: &Url,
        body: &[u8],
        opts: &RequestOptions,
    ) -> Result<HttpResponse, TransportError>;
}

/// [`HttpClient`] over `ureq` (HTTP/1.1, rustls).
pub struct UreqClient {
    agent: ureq::Agent,
}

impl Default for UreqClient {
    fn default() -> Self {
        Self::new()
    }
}

impl UreqClient {
    pub fn new() -> Self {
        let config = ureq::Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .build();
        UreqClient {
            agent: ureq::Agent::new_with_config(config),
        }
    }

    fn finish(
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
        url: &Url,
        opts: &RequestOptions,
    ) -> Result<HttpResponse, TransportError> {
        let mut resp = result.map_err(|e| map_error(e, url))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str().to_ascii_lowercase(),
                    String::from_utf8_lossy(v.as_bytes()).into_owned(),
                )
            })
            .collect();
        let limit = opts.max_body_bytes as u64;
        let mut body = Vec::new();
        resp.body_mut()
            .as_reader()
            .take(limit + 1)
            .read_to_end(&mut body)
            .map_err(map_io)?;
        let truncated = body.len() as u64 > limit;
        body.truncate(opts.max_body_bytes);
        Ok(HttpResponse {
            status,
            headers,
            body,
            truncated,
        })
    }
}

impl HttpClient for UreqClient {
    fn get(&self, url: &Url, opts: &RequestOptions) -> Result<HttpResponse, TransportError> {
        let result = self
            .agent
            .get(url.as_str())
            .header("user-agent", &opts.user_agent)
            .config()
            .timeout_global(Some(opts.timeout))
            .build()
            .call();
        Self::finish(result, url, opts)
    }

    fn post_json(
        &self,
        url: &Url,
        body: &[u8],
        opts: &RequestOptions,
    ) -> Result<HttpResponse, TransportError> {
        let result = self
            .agent
            .post(url.as_str())
            .header("user-agent", &opts.user_agent)
            .header("content-type", "application/json")
            .config()
            .timeout_global(Some(opts.timeout))
            .build()
            .send(body);
        Self::finish(result, url, opts)
    }
}

fn map_error(e: ureq::Error, url: &Url) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::HostNotFound => {
            TransportError::HostNotFound(url.host_str().unwrap_or_default().to_owned())
        }
        ureq::Error::ConnectionFailed => TransportError::Connection(url.to_string()),
        ureq::Error::Io(io) => map_io(io),
        other => TransportError::Other(other.to_string()),
    }
}

fn map_io(e: std::io::Error) -> TransportError {
    if e.kind() == std::io::ErrorKind::TimedOut {
        return TransportError::Timeout;
    }
    if let Some(inner) = e.get_ref().and_then(|r| r.downcast_ref::<ureq::Error>()) {
        if matches!(inner, ureq::Error::Timeout(_)) {
            return TransportError::Timeout;
        }
    }
    match e.kind() {
        std::io::ErrorKind::ConnectionRefused | std::io::ErrorKind::ConnectionReset => {
            TransportError::Connection(e.to_string())
        }
        _ => TransportError::Other(e.to_string()),
    }
}
