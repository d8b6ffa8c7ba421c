use std::collections::HashSet;
use std::io::Read;

use flate2::read::GzDecoder;
use quick_xml::events::Event;
use quick_xml::Reader;
use url::Url;

use super::{resolve_candidate_url, CandidateSource, PageCandidate, SamplerError};
use crate::fetcher::PageSource;

/// Deepest sitemap-index nesting followed.
pub const MAX_SITEMAP_DEPTH: usize = 3;
/// Protocol maximum of URLs per sitemap; also the cap on URLs read per site.
pub const MAX_SITEMAP_URLS: usize = 50_000;
/// Decompressed size cap for gzip sitemaps.
const MAX_INFLATED_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum SitemapDoc {
    /// Page candidates from a `<urlset>`.
    UrlSet(Vec<PageCandidate>),
    /// Child sitemaps of a `<sitemapindex>`, for the caller to fetch.
    Index(Vec<Url>),
}

#[derive(PartialEq)]
enum Root {
    UrlSet,
    Index,
}

/// Parses one sitemap document (gzip allowed). `depth` is the nesting level
/// of this document; anything past [`MAX_SITEMAP_DEPTH`] is refused.
pub fn parse_sitemap(bytes: &[u8], depth: usize) -> Result<SitemapDoc, SamplerError> {
    if depth > MAX_SITEMAP_DEPTH {
        return Err(SamplerError::RecursionLimit(MAX_SITEMAP_DEPTH));
    }
    let inflated;
    let xml = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .take(MAX_INFLATED_BYTES)
            .read_to_end(&mut out)
            .map_err(|e| SamplerError::SitemapParse(format!("gzip: {e}")))?;
        inflated = out;
        &inflated[..]
    } else {
        bytes
    };

    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut root = None;
    let mut locs: Vec<String> = Vec::new();
    let mut loc_text: Option<String> = None;
    let err = |m: String| SamplerError::SitemapParse(m);

    loop {
        match reader
            .read_event_into(&mut buf)
            .map_err(|e| err(e.to_string()))?
        {
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_vec();
                if stack.is_empty() {
                    root = Some(match name.as_slice() {
                        b"urlset" => Root::UrlSet,
                        b"sitemapindex" => Root::Index,
                        other => {
                            return Err(err(format!(
                                "unexpected root element <{}>",
                                String::from_utf8_lossy(other)
                            )))
                        }
                    });
                }
                if name == b"loc" && stack.len() == 2 {
                    loc_text = Some(String::new());
                }
                stack.push(name);
            }
            Event::Empty(e) => {
                if stack.is_empty() {
                    return match e.local_name().as_ref() {
                        b"urlset" => Ok(SitemapDoc::UrlSet(Vec::new())),
                        b"sitemapindex" => Ok(SitemapDoc::Index(Vec::new())),
                        _ => Err(err("unexpected empty root element".into())),
                    };
                }
            }
            Event::Text(t) => {
                if stack.is_empty() {
                    return Err(err("text outside the root element".into()));
                }
                if let Some(s) = loc_text.as_mut() {
                    s.push_str(&t.unescape().map_err(|e| err(e.to_string()))?);
                }
            }
            Event::CData(c) => {
                if let Some(s) = loc_text.as_mut() {
                    s.push_str(&String::from_utf8_lossy(&c.into_inner()));
                }
            }
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                if name == b"loc" {
                    if let Some(s) = loc_text.take() {
                        if locs.len() < MAX_SITEMAP_URLS {
                            locs.push(s.trim().to_owned());
                        }
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(err("document ends inside an open element".into()));
    }
    let Some(root) = root else {
        return Err(err("no root element".into()));
    };

    let urls = locs
        .iter()
        .filter_map(|l| Url::parse(l).ok())
        .filter(|u| matches!(u.scheme(), "http" | "https"));
    Ok(match root {
        Root::UrlSet => SitemapDoc::UrlSet(
            urls.map(|u| PageCandidate::new(super::canonicalize_url(&u), CandidateSource::Sitemap))
                .collect(),
        ),
        Root::Index => SitemapDoc::Index(urls.collect()),
    })
}

/// Fetches and flattens sitemaps starting from `roots`, following indexes
/// up to [`MAX_SITEMAP_DEPTH`] and reading at most `max_urls` URLs.
/// Unfetchable or malformed sitemaps are skipped.
pub fn collect_sitemap_candidates(
    source: &dyn PageSource,
    roots: &[Url],
    max_urls: usize,
) -> Vec<PageCandidate> {
    let mut out = Vec::new();
    let mut seen_maps = HashSet::new();
    let mut seen_urls = HashSet::new();
    let mut queue: Vec<(Url, usize)> = roots.iter().rev().map(|u| (u.clone(), 0)).collect();

    while let Some((map_url, depth)) = queue.pop() {
        if out.len() >= max_urls || !seen_maps.insert(map_url.to_string()) {
            continue;
        }
        let page = match source.get(&map_url) {
            Ok(p) if p.status == 200 => p,
            Ok(p) => {
                log::debug!("sitemap {map_url} answered {}", p.status);
                continue;
            }
            Err(e) => {
                log::debug!("sitemap {map_url} unavailable: {e}");
                continue;
            }
        };
        match parse_sitemap(&page.body, depth) {
            Ok(SitemapDoc::UrlSet(cands)) => {
                for c in cands {
                    if out.len() >= max_urls {
                        break;
                    }
                    if seen_urls.insert(c.url.to_string()) {
                        out.push(c);
                    }
                }
            }
            Ok(SitemapDoc::Index(children)) => {
                for child in children.into_iter().rev() {
                    if let Some(u) = resolve_candidate_url(&map_url, child.as_str()) {
                        queue.push((u, depth + 1));
                    }
                }
            }
            Err(e) => log::warn!("skipping sitemap {map_url}: {e}"),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const URLSET: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<urlset xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">
  <url><loc>https://ex.com/a</loc><lastmod>2024-01-01</lastmod></url>
  <url><loc> https://ex.com/b?x=1&amp;y=2 </loc></url>
</urlset>"#;

    #[test]
    fn urlset() {
        let SitemapDoc::UrlSet(c) = parse_sitemap(URLSET.as_bytes(), 0).unwrap() else {
            panic!("expected urlset")
        };
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].url.as_str(), "https://ex.com/b?x=1&y=2");
        assert!(c
            .iter()
            .all(|c| c.source == CandidateSource::Sitemap && c.capture_timestamp.is_none()));
    }

    #[test]
    fn index() {
        let xml = r#"<sitemapindex xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">
            <sitemap><loc>https://ex.com/posts.xml</loc></sitemap></sitemapindex>"#;
        assert_eq!(
            parse_sitemap(xml.as_bytes(), 1).unwrap(),
            SitemapDoc::Index(vec![Url::parse("https://ex.com/posts.xml").unwrap()])
        );
    }

    #[test]
    fn gzip() {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(URLSET.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        assert!(matches!(parse_sitemap(&gz, 0).unwrap(), SitemapDoc::UrlSet(c) if c.len() == 2));
    }

    #[test]
    fn malformed_and_depth() {
        assert!(matches!(
            parse_sitemap(b"not xml", 0),
            Err(SamplerError::SitemapParse(_))
        ));
        assert!(matches!(
            parse_sitemap(b"<urlset><url><loc>x", 0),
            Err(SamplerError::SitemapParse(_))
        ));
        assert!(matches!(
            parse_sitemap(b"<html></html>", 0),
            Err(SamplerError::SitemapParse(_))
        ));
        assert!(matches!(
            parse_sitemap(b"", 0),
            Err(SamplerError::SitemapParse(_))
        ));
        assert!(matches!(
            parse_sitemap(URLSET.as_bytes(), MAX_SITEMAP_DEPTH + 1),
            Err(SamplerError::RecursionLimit(_))
        ));
        assert!(
            matches!(parse_sitemap(b"<urlset/>", 0).unwrap(), SitemapDoc::UrlSet(c) if c.is_empty())
        );
    }
}
