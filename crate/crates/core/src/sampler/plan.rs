use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{
    canonicalize_url, collect_sitemap_candidates, discover_sitemaps, query_cdx, sample_candidates,
    CandidateSource, CdxFilters, PageCandidate, SamplerError, SiteSpec, MAX_SITEMAP_URLS,
};
use crate::fetcher::PageSource;
use crate::util::hash64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Accepted pages wanted per site.
    pub target_accepted: usize,
    /// Candidates drawn = `oversample_factor * target_accepted`, capped by `max_attempts`.
    pub oversample_factor: usize,
    pub max_attempts: usize,
    pub seed: u64,
    /// Scheme used to reach a site's robots.txt and sitemaps.
    pub scheme: String,
    /// CDX endpoint used when a site has no sitemap.
    pub cdx_endpoint: Option<Url>,
    pub cdx_limit: usize,
    pub cdx_filters: CdxFilters,
    pub max_sitemap_urls: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            target_accepted: 15,
            oversample_factor: 4,
            max_attempts: 100,
            seed: 0,
            scheme: "https".into(),
            cdx_endpoint: None,
            cdx_limit: 1000,
            cdx_filters: CdxFilters::default(),
            max_sitemap_urls: MAX_SITEMAP_URLS,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_owned()));
        if self.target_accepted < 1 {
            return bad("target_accepted must be >= 1");
        }
        if self.max_attempts < self.target_accepted {
            return bad("max_attempts must be >= target_accepted");
        }
        if self.oversample_factor < 1 {
            return bad("oversample_factor must be >= 1");
        }
        if self.cdx_limit < 1 {
            return bad("cdx_limit must be >= 1");
        }
        Ok(())
    }

    pub fn draw_size(&self) -> usize {
        self.oversample_factor
            .saturating_mul(self.target_accepted)
            .min(self.max_attempts)
    }

    /// Per-site seed: independent of the order sites are processed in.
    pub fn site_seed(&self, site_id: &str) -> u64 {
        self.seed ^ hash64(site_id.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub site: SiteSpec,
    pub ordered_candidates: Vec<PageCandidate>,
    pub target_accepted: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

fn dedupe_owned(site: &SiteSpec, cands: Vec<PageCandidate>) -> Vec<PageCandidate> {
    let mut seen = HashSet::new();
    cands
        .into_iter()
        .map(|mut c| {
            c.url = canonicalize_url(&c.url);
            c
        })
        .filter(|c| site.owns(&c.url) && seen.insert(c.url.to_string()))
        .collect()
}

/// Builds the ordered candidate list for one site.
///
/// Sources in priority order, never mixed: manifest seed URLs, sitemap
/// URLs, CDX captures. The chosen pool is sampled down to
/// `min(oversample_factor * target_accepted, max_attempts)`.
pub fn plan_site_sampling(
    site: &SiteSpec,
    config: &SamplingConfig,
    source: &dyn PageSource,
) -> Result<SamplingPlan, SamplerError> {
    config.validate()?;
    site.validate()?;

    let mut pool = dedupe_owned(
        site,
        site.seed_urls
            .iter()
            .map(|u| PageCandidate::new(u.clone(), CandidateSource::Manifest))
            .collect(),
    );

    if pool.is_empty() {
        let sitemaps = discover_sitemaps(site, &config.scheme, source)?;
        if !sitemaps.is_empty() {
            pool = dedupe_owned(
                site,
                collect_sitemap_candidates(source, &sitemaps, config.max_sitemap_urls),
            );
        }
    }

    if pool.is_empty() {
        if let Some(endpoint) = &config.cdx_endpoint {
            let parsed = query_cdx(
                source,
                endpoint,
                &site.host,
                &config.cdx_filters,
                config.cdx_limit,
            )?;
            pool = dedupe_owned(site, parsed.candidates);
        }
    }

    if pool.is_empty() {
        return Err(SamplerError::NoCandidates(site.site_id.clone()));
    }
    let seed = config.site_seed(&site.site_id);
    Ok(SamplingPlan {
        site: site.clone(),
        ordered_candidates: sample_candidates(&pool, config.draw_size(), seed),
        target_accepted: config.target_accepted,
        max_attempts: config.max_attempts,
        seed,
    })
}
