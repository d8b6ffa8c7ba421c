//! Client for CDX capture indexes (Wayback Machine, Common Crawl).
//!
//! Text output lines are `urlkey timestamp original mimetype statuscode
//! digest length`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{canonicalize_url, CandidateSource, PageCandidate, SamplerError};
use crate::fetcher::{validate_timestamp, PageSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdxFilters {
    pub status_200: bool,
    pub html_only: bool,
    pub collapse_urlkey: bool,
}

impl Default for CdxFilters {
    fn default() -> Self {
        CdxFilters {
            status_200: true,
            html_only: true,
            collapse_urlkey: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CdxParse {
    /// Newest capture per urlkey, newest first.
    pub candidates: Vec<PageCandidate>,
    /// Lines that could not be parsed.
    pub skipped: usize,
}

/// `{endpoint}?url={host}/*&output=text&filter=...&collapse=urlkey&limit={n}`
pub fn cdx_query_url(endpoint: &Url, host: &str, filters: &CdxFilters, limit: usize) -> Url {
    let mut q = format!("url={host}/*&output=text");
    if filters.status_200 {
        q.push_str("&filter=statuscode:200");
    }
    if filters.html_only {
        q.push_str("&filter=mimetype:text/html");
    }
    if filters.collapse_urlkey {
        q.push_str("&collapse=urlkey");
    }
    q.push_str(&format!("&limit={limit}"));
    let mut url = endpoint.clone();
    url.set_query(Some(&q));
    url
}

struct Capture {
    urlkey: String,
    candidate: PageCandidate,
}

fn parse_line(line: &str) -> Option<Capture> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 5 {
        return None;
    }
    let ts = fields[1];
    validate_timestamp(ts).ok()?;
    let original = fields[2];
    let url = if original.contains("://") {
        Url::parse(original).ok()?
    } else {
        Url::parse(&format!("http://{original}")).ok()?
    };
    if !matches!(url.scheme(), "http" | "https") {
        return None;
    }
    Some(Capture {
        urlkey: fields[0].to_owned(),
        candidate: PageCandidate {
            url: canonicalize_url(&url),
            source: CandidateSource::Cdx,
            capture_timestamp: Some(ts.to_owned()),
            mime: Some(fields[3].to_owned()),
            status: fields[4].parse().ok(),
        },
    })
}

/// Parses a text-format CDX response.
///
/// The first `limit` conforming lines are kept (requested filters are
/// re-checked client side), then reduced to the newest capture per urlkey
/// and ordered newest first.
pub fn parse_cdx(body: &str, filters: &CdxFilters, limit: usize) -> CdxParse {
    let mut kept: Vec<Capture> = Vec::new();
    let mut skipped = 0;
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        if kept.len() >= limit {
            break;
        }
        let Some(cap) = parse_line(line) else {
            skipped += 1;
            continue;
        };
        let c = &cap.candidate;
        if filters.status_200 && c.status != Some(200) {
            continue;
        }
        if filters.html_only && c.mime.as_deref() != Some("text/html") {
            continue;
        }
        kept.push(cap);
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} unparseable CDX lines");
    }

    let mut newest: HashMap<String, usize> = HashMap::new();
    for (i, cap) in kept.iter().enumerate() {
        let ts = &cap.candidate.capture_timestamp;
        newest
            .entry(cap.urlkey.clone())
            .and_modify(|j| {
                if ts > &kept[*j].candidate.capture_timestamp {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let mut chosen: Vec<usize> = newest.into_values().collect();
    chosen.sort_by(|a, b| {
        kept[*b]
            .candidate
            .capture_timestamp
            .cmp(&kept[*a].candidate.capture_timestamp)
            .then(a.cmp(b))
    });
    CdxParse {
        candidates: chosen
            .into_iter()
            .map(|i| kept[i].candidate.clone())
            .collect(),
        skipped,
    }
}

/// Queries a CDX endpoint for captures under `host`.
pub fn query_cdx(
    source: &dyn PageSource,
    endpoint: &Url,
    host: &str,
    filters: &CdxFilters,
    limit: usize,
) -> Result<CdxParse, SamplerError> {
    if limit < 1 {
        return Err(SamplerError::InvalidConfig("CDX limit must be >= 1".into()));
    }
    let url = cdx_query_url(endpoint, host, filters, limit);
    let page = source
        .get_index(&url)
        .map_err(|e| SamplerError::IndexUnavailable(e.to_string()))?;
    if page.status != 200 {
        return Err(SamplerError::IndexUnavailable(format!(
            "{url} answered {}",
            page.status
        )));
    }
    Ok(parse_cdx(
        &String::from_utf8_lossy(&page.body),
        filters,
        limit,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_string_exact() {
        let ep = Url::parse("http://index.test/cdx").unwrap();
        assert_eq!(
            cdx_query_url(&ep, "example.com", &CdxFilters::default(), 60).as_str(),
            "http://index.test/cdx?url=example.com/*&output=text&filter=statuscode:200&filter=mimetype:text/html&collapse=urlkey&limit=60"
        );
    }

    #[test]
    fn one_line() {
        let p = parse_cdx(
            "com,example)/a 20240101000000 https://example.com/a text/html 200 ABC 123\n",
            &CdxFilters::default(),
            10,
        );
        assert_eq!(p.candidates.len(), 1);
        let c = &p.candidates[0];
        assert_eq!(c.url.as_str(), "https://example.com/a");
        assert_eq!(c.capture_timestamp.as_deref(), Some("20240101000000"));
        assert_eq!(c.source, CandidateSource::Cdx);
        assert!(parse_cdx("", &CdxFilters::default(), 10)
            .candidates
            .is_empty());
    }

    #[test]
    fn newest_per_urlkey_first() {
        let body = "\
com,ex)/a 20200101000000 https://ex.com/a text/html 200 A 1
com,ex)/b 20210101000000 https://ex.com/b text/html 200 B 1
com,ex)/a 20230101000000 https://ex.com/a text/html 200 C 1
garbage
com,ex)/c 20220101000000 https://ex.com/c application/pdf 200 D 1
com,ex)/d 20220101000000 https://ex.com/d text/html 404 E 1
";
        let p = parse_cdx(body, &CdxFilters::default(), 100);
        let got: Vec<_> = p
            .candidates
            .iter()
            .map(|c| {
                (
                    c.url.path().to_owned(),
                    c.capture_timestamp.clone().unwrap(),
                )
            })
            .collect();
        assert_eq!(
            got,
            [
                ("/a".to_owned(), "20230101000000".to_owned()),
                ("/b".to_owned(), "20210101000000".to_owned())
            ]
        );
        assert_eq!(p.skipped, 1);

        let unfiltered = CdxFilters {
            status_200: false,
            html_only: false,
            collapse_urlkey: true,
        };
        assert_eq!(parse_cdx(body, &unfiltered, 100).candidates.len(), 4);
    }
}
