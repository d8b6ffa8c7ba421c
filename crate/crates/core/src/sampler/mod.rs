//! Candidate page discovery (sitemaps, CDX archive indexes, manifest seeds)
//! and deterministic random sampling of candidates per site.

mod cdx;
mod plan;
mod robots;
mod sample;
mod sitemap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub use cdx::{cdx_query_url, parse_cdx, query_cdx, CdxFilters, CdxParse};
pub use plan::{plan_site_sampling, SamplingConfig, SamplingPlan};
pub use robots::{discover_sitemaps, parse_robots_sitemaps};
pub use sample::sample_candidates;
pub use sitemap::{
    collect_sitemap_candidates, parse_sitemap, SitemapDoc, MAX_SITEMAP_DEPTH, MAX_SITEMAP_URLS,
};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid host {0:?}: expected a bare lowercase domain, optionally with a port")]
    InvalidHost(String),
    #[error("site unreachable: {0}")]
    SiteUnreachable(String),
    #[error("sitemap parse error: {0}")]
    SitemapParse(String),
    #[error("sitemap nesting deeper than {0}")]
    RecursionLimit(usize),
    #[error("archive index unavailable: {0}")]
    IndexUnavailable(String),
    #[error("no candidate pages for site {0}")]
    NoCandidates(String),
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteLabel {
    Llm,
    Human,
    #[default]
    Unknown,
}

impl SiteLabel {
    pub fn known(self) -> Option<crate::classifier::Label> {
        match self {
            SiteLabel::Llm => Some(crate::classifier::Label::Llm),
            SiteLabel::Human => Some(crate::classifier::Label::Human),
            SiteLabel::Unknown => None,
        }
    }
}

/// One website to classify, as listed in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub site_id: String,
    /// Registrable domain, lowercase, no scheme or path. A port is allowed.
    pub host: String,
    #[serde(default)]
    pub label: SiteLabel,
    #[serde(default)]
    pub cohort_tags: Vec<String>,
    /// Best position of the site in search results, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_rank: Option<u32>,
    /// Explicit page URLs; when present they replace sitemap/CDX discovery.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_urls: Vec<Url>,
}

impl SiteSpec {
    pub fn new(site_id: impl Into<String>, host: impl Into<String>) -> Self {
        SiteSpec {
            site_id: site_id.into(),
            host: host.into(),
            label: SiteLabel::Unknown,
            cohort_tags: Vec::new(),
            search_rank: None,
            seed_urls: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let h = &self.host;
        let bad = || SamplerError::InvalidHost(h.clone());
        if h.is_empty() || h.contains("://") || h.contains('/') || *h != h.to_lowercase() {
            return Err(bad());
        }
        let parsed = Url::parse(&format!("http://{h}/")).map_err(|_| bad())?;
        let host = parsed.host_str().ok_or_else(bad)?;
        let expected = match parsed.port() {
            Some(p) => format!("{host}:{p}"),
            None => host.to_owned(),
        };
        if expected != *h && h.trim_end_matches(":80") != host {
            return Err(bad());
        }
        Ok(())
    }

    /// `{scheme}://{host}/`
    pub fn origin(&self, scheme: &str) -> Result<Url, SamplerError> {
        Url::parse(&format!("{scheme}://{}/", self.host))
            .map_err(|_| SamplerError::InvalidHost(self.host.clone()))
    }

    /// Whether `url` belongs to this site (same host or a subdomain of it,
    /// and the same port when the site names one).
    pub fn owns(&self, url: &Url) -> bool {
        let Ok(origin) = Url::parse(&format!("http://{}/", self.host)) else {
            return false;
        };
        let (Some(site), Some(other)) = (origin.host_str(), url.host_str()) else {
            return false;
        };
        let host_ok = other == site || other.ends_with(&format!(".{site}"));
        let port_ok = origin
            .port()
            .is_none_or(|p| url.port_or_known_default() == Some(p));
        host_ok && port_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Sitemap,
    Cdx,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageCandidate {
    pub url: Url,
    pub source: CandidateSource,
    /// 14-digit capture time; present exactly for CDX candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

impl PageCandidate {
    pub fn new(url: Url, source: CandidateSource) -> Self {
        PageCandidate {
            url,
            source,
            capture_timestamp: None,
            mime: None,
            status: None,
        }
    }
}

/// Lowercased host, no fragment, default port elided.
pub fn canonicalize_url(url: &Url) -> Url {
    let mut u = url.clone();
    u.set_fragment(None);
    u
}

/// Resolves `raw` against `base` and canonicalizes; only http(s) survives.
pub fn resolve_candidate_url(base: &Url, raw: &str) -> Option<Url> {
    let u = base.join(raw.trim()).ok()?;
    matches!(u.scheme(), "http" | "https").then(|| canonicalize_url(&u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn host_validation() {
        for ok in ["example.com", "blog.example.co.uk", "127.0.0.1:8080"] {
            assert!(SiteSpec::new("a", ok).validate().is_ok(), "{ok}");
        }
        for bad in ["", "Example.com", "https://example.com", "example.com/path"] {
            assert!(SiteSpec::new("a", bad).validate().is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_forms() {
        let base = Url::parse("https://Example.COM:443/dir/page").unwrap();
        assert_eq!(
            resolve_candidate_url(&base, "../a#frag").unwrap().as_str(),
            "https://example.com/a"
        );
        assert!(resolve_candidate_url(&base, "mailto:x@y.z").is_none());
    }

    #[test]
    fn ownership() {
        let s = SiteSpec::new("a", "example.com");
        assert!(s.owns(&Url::parse("https://www.example.com/x").unwrap()));
        assert!(!s.owns(&Url::parse("https://notexample.com/x").unwrap()));
        let local = SiteSpec::new("b", "127.0.0.1:9000");
        assert!(local.owns(&Url::parse("http://127.0.0.1:9000/p").unwrap()));
        assert!(!local.owns(&Url::parse("http://127.0.0.1:9001/p").unwrap()));
    }
}
