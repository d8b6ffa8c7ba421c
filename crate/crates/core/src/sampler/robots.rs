use url::Url;

use super::{SamplerError, SiteSpec};
use crate::fetcher::{FetchError, FetchedPage, PageSource};

/// `Sitemap:` directives in file order. Field names are case-insensitive
/// and relative values resolve against `origin`.
pub fn parse_robots_sitemaps(robots: &str, origin: &Url) -> Vec<Url> {
    robots
        .lines()
        .filter_map(|line| {
            let line = line.split('#').next().unwrap_or("").trim();
            let (key, value) = line.split_once(':')?;
            if !key.trim().eq_ignore_ascii_case("sitemap") {
                return None;
            }
            origin.join(value.trim()).ok()
        })
        .filter(|u| matches!(u.scheme(), "http" | "https"))
        .collect()
}

fn looks_like_sitemap(page: &FetchedPage) -> bool {
    let ct = page.content_type.to_ascii_lowercase();
    if ct.contains("html") {
        return false;
    }
    if ct.contains("xml") || ct.contains("gzip") || page.body.starts_with(&[0x1f, 0x8b]) {
        return true;
    }
    let head = String::from_utf8_lossy(&page.body[..page.body.len().min(512)]);
    let head = head.trim_start_matches('\u{feff}').trim_start();
    head.starts_with("<?xml") || head.starts_with("<urlset") || head.starts_with("<sitemapindex")
}

/// Sitemaps named in robots.txt, then `/sitemap.xml` when it answers 200
/// with XML. robots.txt failures other than DNS are treated as "absent".
pub fn discover_sitemaps(
    site: &SiteSpec,
    scheme: &str,
    source: &dyn PageSource,
) -> Result<Vec<Url>, SamplerError> {
    site.validate()?;
    let origin = site.origin(scheme)?;
    let unreachable = |e: &FetchError| SamplerError::SiteUnreachable(format!("{}: {e}", site.host));

    let mut found = Vec::new();
    let robots_url = origin.join("/robots.txt").expect("static path");
    match source.get(&robots_url) {
        Ok(page) if page.status == 200 => {
            found = parse_robots_sitemaps(&String::from_utf8_lossy(&page.body), &origin);
        }
        Ok(_) => {}
        Err(e) if e.is_host_not_found() => return Err(unreachable(&e)),
        Err(e) => log::debug!("robots.txt unavailable for {}: {e}", site.host),
    }

    let well_known = origin.join("/sitemap.xml").expect("static path");
    if !found.contains(&well_known) {
        match source.get(&well_known) {
            Ok(page) if page.status == 200 && looks_like_sitemap(&page) => found.push(well_known),
            Ok(_) => {}
            Err(e) if e.is_host_not_found() => return Err(unreachable(&e)),
            Err(e) => log::debug!("{well_known} unavailable: {e}"),
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robots_lines_in_order() {
        let origin = Url::parse("https://ex.com/").unwrap();
        let txt = "User-agent: *\nDisallow: /x\nSitemap: https://ex.com/sm.xml\nsitemap:/news.xml # comment\n";
        let got = parse_robots_sitemaps(txt, &origin);
        assert_eq!(
            got.iter().map(Url::as_str).collect::<Vec<_>>(),
            ["https://ex.com/sm.xml", "https://ex.com/news.xml"]
        );
        assert!(parse_robots_sitemaps("User-agent: *\n", &origin).is_empty());
    }
}
