//! Fixture websites served from a local port, with robots.txt and a
//! sitemap pointing at their pages.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use llmsite::sampler::{SiteLabel, SiteSpec};

use crate::server::{Reply, TestServer};
use crate::synth::SyntheticSite;

const NAV: &str = r#"<nav><a href="/">Home</a> <a href="/about">About</a> <a href="/blog">Blog</a> <a href="/contact">Contact</a></nav>"#;
const FOOTER: &str =
    r#"<footer><p>Copyright 2024. All rights reserved.</p><a href="/privacy">Privacy</a></footer>"#;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Splits text into paragraphs of four sentences.
pub fn paragraphs(text: &str) -> Vec<String> {
    let sentences: Vec<&str> = text.split_inclusive(". ").collect();
    sentences
        .chunks(4)
        .map(|c| c.concat().trim().to_owned())
        .collect()
}

/// An article page with navigation and footer boilerplate around it.
pub fn prose_page_html(title: &str, paragraphs: &[String]) -> String {
    let body: String = paragraphs
        .iter()
        .map(|p| format!("<p>{}</p>\n", escape(p)))
        .collect();
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>{t}</title></head>\n<body>{NAV}\n<article><h1>{t}</h1>\n{body}</article>\n{FOOTER}</body></html>\n",
        t = escape(title)
    )
}

/// A page that is nothing but a list of links.
pub fn link_listing_html(title: &str, n_links: usize) -> String {
    let items: String = (0..n_links)
        .map(|i| {
            format!(
                "<li><a href=\"/item/{i}\">Listing entry number {i} with a long anchor</a></li>\n"
            )
        })
        .collect();
    format!(
        "<!DOCTYPE html>\n<html><head><title>{t}</title></head><body>{NAV}<main><h1>{t}</h1><ul>\n{items}</ul></main>{FOOTER}</body></html>\n",
        t = escape(title)
    )
}

pub struct FixtureSite {
    pub server: TestServer,
    pub paths: Vec<String>,
}

impl FixtureSite {
    /// Serves `pages` (path, html) plus `/robots.txt` naming
    /// `/sitemap.xml`, which lists every page.
    pub fn serve(pages: Vec<(String, String)>) -> Self {
        let paths: Vec<String> = pages.iter().map(|(p, _)| p.clone()).collect();
        let table: HashMap<String, String> = pages.into_iter().collect();
        let host: Arc<OnceLock<String>> = Arc::new(OnceLock::new());
        let h = host.clone();
        let listed = paths.clone();
        let server = TestServer::start(move |req| {
            let origin = format!("http://{}", h.get().expect("host set before first request"));
            match req.path.as_str() {
                "/robots.txt" => Reply::text(format!(
                    "User-agent: *\nAllow: /\nSitemap: {origin}/sitemap.xml\n"
                )),
                "/sitemap.xml" => {
                    let urls: String = listed
                        .iter()
                        .map(|p| format!("  <url><loc>{origin}{p}</loc></url>\n"))
                        .collect();
                    Reply::xml(format!(
                        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<urlset xmlns=\"http://www.sitemaps.org/schemas/sitemap/0.9\">\n{urls}</urlset>\n"
                    ))
                }
                p => table
                    .get(p)
                    .map(|html| Reply::html(html.clone()))
                    .unwrap_or_else(Reply::not_found),
            }
        });
        host.set(server.host()).expect("set once");
        FixtureSite { server, paths }
    }

    /// One article page per synthetic text.
    pub fn from_synthetic(site: &SyntheticSite) -> Self {
        FixtureSite::serve(
            site.texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    (
                        format!("/posts/{i:03}.html"),
                        prose_page_html(&format!("Post {i}"), &paragraphs(t)),
                    )
                })
                .collect(),
        )
    }

    /// `n` pages that each consist of a link list.
    pub fn link_listings(n: usize) -> Self {
        FixtureSite::serve(
            (0..n)
                .map(|i| {
                    (
                        format!("/list/{i}.html"),
                        link_listing_html(&format!("Listing {i}"), 25),
                    )
                })
                .collect(),
        )
    }

    pub fn host(&self) -> String {
        self.server.host()
    }

    pub fn spec(&self, site_id: &str, label: SiteLabel) -> SiteSpec {
        let mut s = SiteSpec::new(site_id, self.host());
        s.label = label;
        s
    }
}
