#![allow(dead_code)]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use llmsite::filter::FilterReason;
use llmsite_testkit::sites::{paragraphs, prose_page_html};
use llmsite_testkit::synth::prose;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Debug, Deserialize)]
pub struct GoldenExtraction {
    pub name: String,
    pub paragraphs: Vec<String>,
    pub total: usize,
    pub link: usize,
    pub list: usize,
    pub table: usize,
    pub words: usize,
}

/// Golden fixtures with their HTML bytes.
pub fn golden_extractions() -> Vec<(GoldenExtraction, Vec<u8>)> {
    let dir = fixtures_dir().join("extract");
    let expected: Vec<GoldenExtraction> =
        serde_json::from_slice(&std::fs::read(dir.join("expected.json")).unwrap()).unwrap();
    expected
        .into_iter()
        .map(|g| {
            let html = std::fs::read(dir.join(format!("{}.html", g.name))).unwrap();
            (g, html)
        })
        .collect()
}

fn text(seed: u64, rho: f64, words: usize) -> String {
    prose(&mut ChaCha8Rng::seed_from_u64(seed), rho, words)
}

const BOILERPLATE_TOP: &str = concat!(
    r#"<header><a href="/">Brand</a><h1>Brand name</h1></header>"#,
    r#"<nav><ul><li><a href="/a">Alpha</a></li><li><a href="/b">Beta</a></li></ul></nav>"#,
    r#"<script>window.analytics = { id: 42 };</script><style>body { margin: 0 }</style>"#,
);
const BOILERPLATE_BOTTOM: &str = concat!(
    r#"<aside><h3>Related</h3><p>Other stories you may like.</p></aside>"#,
    r#"<form action="/subscribe"><label>Email</label><input name="e"><button>Join</button></form>"#,
    r#"<footer><p>Copyright. All rights reserved.</p><a href="/privacy">Privacy</a></footer>"#,
    r#"<noscript>Enable JavaScript</noscript>"#,
);

/// Pairs of (bare article, same article inside site chrome). Extraction
/// must not see the chrome.
pub fn wrapped_pairs() -> Vec<(String, String)> {
    (0..20u64)
        .map(|i| {
            let body: String = paragraphs(&text(100 + i, 0.2 + 0.03 * i as f64, 120 + 10 * i as usize))
                .iter()
                .map(|p| format!("<p>{p}</p>"))
                .collect();
            let core = if i % 2 == 0 {
                format!("<article><h2>Story {i}</h2>{body}</article>")
            } else {
                format!("<div class=\"content\"><h2>Story {i}</h2>{body}</div>")
            };
            let bare = format!("<html><body>{core}</body></html>");
            let sidebar = r#"<div class="links"><p><a href="/1">one</a> <a href="/2">two</a> <a href="/3">three</a></p></div>"#;
            let wrapped = match i % 4 {
                0 | 1 => format!("<html><head><title>x</title></head><body>{BOILERPLATE_TOP}{core}{BOILERPLATE_BOTTOM}</body></html>"),
                2 => format!("<html><body>{BOILERPLATE_TOP}<div id=\"wrap\">{core}</div>{BOILERPLATE_BOTTOM}</body></html>"),
                _ => format!("<html><body>{BOILERPLATE_TOP}{sidebar}{core}{BOILERPLATE_BOTTOM}</body></html>"),
            };
            (bare, wrapped)
        })
        .collect()
}

/// Every `every`-th sentence goes through `wrap` into `container`; the
/// rest are plain paragraphs.
fn mixed_page(
    seed: u64,
    words: usize,
    every: usize,
    wrap: impl Fn(&str) -> String,
    container: (&str, &str),
) -> String {
    let t = text(seed, 0.3, words);
    let sentences: Vec<&str> = t.split_inclusive(". ").collect();
    let mut plain = String::new();
    let mut inner = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i % every == 0 {
            inner.push_str(&wrap(s.trim()));
        } else {
            plain.push_str(&format!("<p>{}</p>", s.trim()));
        }
    }
    format!(
        "<html><body><div>{plain}</div>{}{inner}{}</body></html>",
        container.0, container.1
    )
}

/// 25 crafted pages, in admission order, with the reason each must get.
pub fn filter_corpus() -> Vec<(String, String, FilterReason)> {
    let mut pages = Vec::new();
    let ok = |seed: u64| prose_page_html(&format!("Ok {seed}"), &paragraphs(&text(seed, 0.3, 260)));
    for s in 0..10 {
        pages.push((format!("ok-{s}"), ok(s), FilterReason::Ok));
    }
    for s in 0..3 {
        pages.push((
            format!("short-{s}"),
            prose_page_html(
                "Short",
                &paragraphs(&text(50 + s, 0.3, 60 + 40 * s as usize)),
            ),
            FilterReason::ShortText,
        ));
    }
    for s in 0..3 {
        // Every other sentence is a link inside the paragraph flow.
        let t = text(60 + s, 0.3, 300);
        let body: String = t
            .split_inclusive(". ")
            .collect::<Vec<_>>()
            .chunks(2)
            .map(|c| {
                format!(
                    "<p>{} <a href=\"/r/{s}\">{}</a></p>",
                    c[0].trim(),
                    c.get(1).map(|x| x.trim()).unwrap_or("more")
                )
            })
            .collect();
        pages.push((
            format!("links-{s}"),
            format!("<html><body>{body}</body></html>"),
            FilterReason::LinkHeavy,
        ));
    }
    for s in 0..3 {
        pages.push((
            format!("list-{s}"),
            mixed_page(
                70 + s,
                320,
                2,
                |x| format!("<li>{x}</li>"),
                ("<ul>", "</ul>"),
            ),
            FilterReason::ListHeavy,
        ));
    }
    for s in 0..3 {
        pages.push((
            format!("table-{s}"),
            mixed_page(
                80 + s,
                320,
                2,
                |x| format!("<tr><td>{x}</td></tr>"),
                ("<table>", "</table>"),
            ),
            FilterReason::TableHeavy,
        ));
    }
    // Near-copies of accepted pages: a changed title and one extra sentence.
    for s in 0..3u64 {
        let mut p = paragraphs(&text(s, 0.3, 260));
        p.push("One more closing sentence was added here.".into());
        pages.push((
            format!("dup-{s}"),
            prose_page_html("Copy", &p),
            FilterReason::Duplicate,
        ));
    }
    pages
}

pub fn sampler_fixture(name: &str, origin: &str) -> Vec<u8> {
    let raw = std::fs::read_to_string(fixtures_dir().join("sampler").join(name)).unwrap();
    raw.replace("{{ORIGIN}}", origin).into_bytes()
}

pub fn sampler_expected(origin: &str) -> serde_json::Value {
    serde_json::from_slice(&sampler_fixture("expected.json", origin)).unwrap()
}

pub fn gzip(bytes: &[u8]) -> Vec<u8> {
    use std::io::Write;
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(bytes).unwrap();
    enc.finish().unwrap()
}

/// Serves the sampler fixtures as a website, with the recorded CDX
/// response at `/cdx`.
pub fn sampler_server() -> llmsite_testkit::TestServer {
    use llmsite_testkit::Reply;
    use std::sync::{Arc, OnceLock};
    let origin: Arc<OnceLock<String>> = Arc::new(OnceLock::new());
    let o = origin.clone();
    let server = llmsite_testkit::TestServer::start(move |req| {
        let origin = o.get().unwrap();
        let path = req.path.split('?').next().unwrap();
        let file = |n: &str| sampler_fixture(n, origin);
        match path {
            "/robots.txt" => Reply::new(200, "text/plain", file("robots.txt")),
            "/sitemap_index.xml" => Reply::xml(file("sitemap_index.xml")),
            "/extra.xml" => Reply::xml(file("extra.xml")),
            "/sm/posts.xml" => Reply::xml(file("posts.xml")),
            "/sm/pages.xml.gz" => Reply::new(200, "application/x-gzip", gzip(&file("pages.xml"))),
            "/sm/broken.xml" => Reply::xml(file("broken.xml")),
            "/sm/nested_index.xml" => Reply::xml(file("nested_index.xml")),
            "/sm/deep.xml" => Reply::xml(file("deep.xml")),
            "/cdx" => Reply::new(200, "text/plain", file("cdx_wayback.txt")),
            _ => Reply::not_found(),
        }
    });
    origin.set(format!("http://{}", server.host())).unwrap();
    server
}

pub mod study {
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::{Arc, OnceLock};
    use std::time::Duration;

    use llmsite::classifier::{Label, LinearModel};
    use llmsite::http::UreqClient;
    use llmsite::sampler::{SiteLabel, SiteSpec};
    use llmsite::score::{ScoreError, ScoredBatch, Scorer, StubScorer};
    use llmsite::study::{Pipeline, RunConfig, RunManifest};
    use llmsite_testkit::sites::FixtureSite;
    use llmsite_testkit::synth::{baseline_model, synthetic_baseline, BaselineSpec, Calibration};

    pub fn model() -> LinearModel {
        static MODEL: OnceLock<LinearModel> = OnceLock::new();
        MODEL.get_or_init(|| baseline_model(1)).clone()
    }

    pub fn config() -> RunConfig {
        let mut c = RunConfig::default();
        c.sampling.scheme = "http".into();
        c.sampling.seed = 2024;
        c.fetch.per_host_min_delay = Duration::ZERO;
        c.fetch.timeout = Duration::from_secs(5);
        c.scorer.stub = true;
        c
    }

    /// Ten local sites: four llm and four human prose sites, one site of
    /// link listings and one dead host.
    pub struct FixtureStudy {
        pub sites: Vec<FixtureSite>,
        pub manifest: RunManifest,
    }

    pub fn fixture_study() -> FixtureStudy {
        let spec = BaselineSpec {
            llm_sites: 4,
            human_sites: 4,
            pages_per_site: 20,
            ..BaselineSpec::default()
        };
        let cal = Calibration::new(spec.words_per_page);
        let synthetic = synthetic_baseline("e2e", 3, &spec, &cal);
        let mut sites = Vec::new();
        let mut specs = Vec::new();
        for (i, s) in synthetic.iter().enumerate() {
            let site = FixtureSite::from_synthetic(s);
            let label = if s.label == Label::Llm {
                SiteLabel::Llm
            } else {
                SiteLabel::Human
            };
            let mut spec = site.spec(&format!("site-{i:02}"), label);
            spec.search_rank = Some(1 + i as u32 * 3);
            spec.cohort_tags = vec![if i % 2 == 0 {
                "era:post".into()
            } else {
                "era:pre".into()
            }];
            specs.push(spec);
            sites.push(site);
        }
        let links = FixtureSite::link_listings(10);
        specs.push(links.spec("site-08", SiteLabel::Human));
        sites.push(links);
        let mut dead = SiteSpec::new("site-09", "127.0.0.1:1");
        dead.label = SiteLabel::Unknown;
        specs.push(dead);
        FixtureStudy {
            sites,
            manifest: RunManifest::new("e2e", specs, config()),
        }
    }

    pub fn pipeline(scorer: Arc<dyn Scorer>) -> Pipeline {
        let c = config();
        let fetcher = llmsite::fetcher::Fetcher::new(c.fetch.clone(), Arc::new(UreqClient::new()));
        Pipeline::new(c, fetcher, scorer, model())
    }

    /// Stub scorer that raises `stop` once it has scored `after` sites.
    pub struct StoppingScorer {
        pub stop: Arc<AtomicBool>,
        pub after: usize,
        pub calls: AtomicUsize,
    }

    impl Scorer for StoppingScorer {
        fn score_texts(&self, texts: &[String]) -> Result<ScoredBatch, ScoreError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) + 1 >= self.after {
                self.stop.store(true, Ordering::SeqCst);
            }
            StubScorer.score_texts(texts)
        }
    }

    /// Fails for texts of one chosen site, identified by its first text.
    pub struct FlakyScorer {
        pub poison: String,
    }

    impl Scorer for FlakyScorer {
        fn score_texts(&self, texts: &[String]) -> Result<ScoredBatch, ScoreError> {
            if texts.first() == Some(&self.poison) {
                return Err(ScoreError::ScorerUnavailable("scripted outage".into()));
            }
            StubScorer.score_texts(texts)
        }
    }
}
