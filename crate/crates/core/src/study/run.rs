use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::{PageRecord, RunConfig, RunManifest, SiteResult, SiteStatus, StudyError};
use crate::classifier::{LinearModel, SiteFeatures};
use crate::extract::extract;
use crate::fetcher::{FetchError, Fetcher, PageCache};
use crate::filter::SiteDedupState;
use crate::http::HttpClient;
use crate::sampler::{plan_site_sampling, CandidateSource, SiteSpec};
use crate::score::{HttpScorer, Scorer, StubScorer};
use crate::util::{read_jsonl, write_atomic, JsonlWriter};

/// Main-text word count below which a successful page counts as near-empty.
const NEAR_EMPTY_WORDS: usize = 20;

/// Paths of the files making up a run directory.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunFiles { dir: dir.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn pages(&self) -> PathBuf {
        self.dir.join("pages.jsonl")
    }

    pub fn sites(&self) -> PathBuf {
        self.dir.join("sites.jsonl")
    }

    pub fn results(&self) -> PathBuf {
        self.dir.join("results.jsonl")
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn load_manifest(&self) -> Result<RunManifest, StudyError> {
        let path = self.manifest();
        let bytes = std::fs::read(&path).map_err(StudyError::io(&path))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| StudyError::Config(format!("{}: {e}", path.display())))
    }

    /// Completed results, first record per site winning.
    pub fn load_results(&self) -> Result<Vec<SiteResult>, StudyError> {
        let path = self.results();
        let all: Vec<SiteResult> = read_jsonl(&path).map_err(StudyError::io(&path))?;
        let mut seen = HashSet::new();
        Ok(all
            .into_iter()
            .filter(|r| seen.insert(r.site_id.clone()))
            .collect())
    }
}

pub struct Pipeline {
    config: RunConfig,
    fetcher: Fetcher,
    scorer: Arc<dyn Scorer>,
    model: LinearModel,
}

impl Pipeline {
    pub fn new(
        config: RunConfig,
        fetcher: Fetcher,
        scorer: Arc<dyn Scorer>,
        model: LinearModel,
    ) -> Self {
        Pipeline {
            config,
            fetcher,
            scorer,
            model,
        }
    }

    /// Wires the fetcher, cache and scorer described by `config`.
    pub fn from_config(
        config: RunConfig,
        client: Arc<dyn HttpClient>,
        model: LinearModel,
    ) -> Result<Self, StudyError> {
        config.validate()?;
        let mut fetcher = Fetcher::new(config.fetch.clone(), client.clone())
            .with_archive_base(config.archive_base.clone());
        if let Some(dir) = &config.cache_dir {
            fetcher = fetcher.with_cache(PageCache::new(dir).map_err(StudyError::io(dir))?);
        }
        let scorer: Arc<dyn Scorer> = if config.scorer.stub {
            Arc::new(StubScorer)
        } else {
            Arc::new(HttpScorer::new(config.scorer.endpoint.clone(), client))
        };
        Ok(Pipeline::new(config, fetcher, scorer, model))
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn scorer(&self) -> &Arc<dyn Scorer> {
        &self.scorer
    }

    /// Samples, fetches, filters and scores one site.
    ///
    /// Site-level problems are reported through the result status; only a
    /// scorer failure is an error, so that the site is retried on resume.
    pub fn run_site(&self, site: &SiteSpec) -> Result<(SiteResult, Vec<PageRecord>), StudyError> {
        let cfg = &self.config;
        let mut result = SiteResult {
            site_id: site.site_id.clone(),
            status: SiteStatus::Unreachable,
            verdict: None,
            pages_sampled: 0,
            pages_accepted: 0,
            pages_rejected: 0,
            rejection_histogram: BTreeMap::new(),
            search_rank: site.search_rank,
            label: site.label,
            cohort_tags: site.cohort_tags.clone(),
            borderline: false,
            scores: Vec::new(),
            near_empty_pages: 0,
            error: None,
        };
        let plan = match plan_site_sampling(site, &cfg.sampling, &self.fetcher) {
            Ok(p) => p,
            Err(e) => {
                result.error = Some(e.to_string());
                return Ok((result, Vec::new()));
            }
        };

        let mut records = Vec::new();
        let mut texts = Vec::new();
        let mut accepted_idx = Vec::new();
        let mut dedup = SiteDedupState::new();
        let mut transport_failures = 0;
        for cand in plan.ordered_candidates.iter().take(plan.max_attempts) {
            if texts.len() >= plan.target_accepted {
                break;
            }
            let mut rec = PageRecord {
                site_id: site.site_id.clone(),
                url: cand.url.clone(),
                source: cand.source,
                capture_timestamp: cand.capture_timestamp.clone(),
                final_url: None,
                http_status: None,
                from_cache: false,
                accepted: false,
                outcome: String::new(),
                detail: BTreeMap::new(),
                error: None,
                score: None,
                token_count: None,
                scorer_id: None,
            };
            let fetched = match (&cand.source, &cand.capture_timestamp) {
                (CandidateSource::Cdx, Some(ts)) => self.fetcher.fetch_archived(&cand.url, ts),
                _ => self.fetcher.fetch(&cand.url),
            };
            match fetched {
                Err(e) => {
                    if matches!(e, FetchError::Transport { .. } | FetchError::Timeout(_)) {
                        transport_failures += 1;
                    }
                    rec.outcome = "fetch_error".into();
                    rec.error = Some(e.to_string());
                }
                Ok(page) => {
                    rec.final_url = Some(page.final_url.clone());
                    rec.http_status = Some(page.status);
                    rec.from_cache = page.from_cache;
                    if !(200..300).contains(&page.status) {
                        rec.outcome = "http_error".into();
                    } else if !page.is_html() {
                        rec.outcome = "not_html".into();
                    } else {
                        match extract(&page.body) {
                            Err(e) => {
                                rec.outcome = "extract_error".into();
                                rec.error = Some(e.to_string());
                            }
                            Ok(content) => {
                                if content.word_count < NEAR_EMPTY_WORDS {
                                    result.near_empty_pages += 1;
                                }
                                let v = dedup.admit(cand.url.as_str(), &content, &cfg.filter);
                                rec.accepted = v.accepted;
                                rec.outcome = v.reason.as_str().into();
                                rec.detail = v.detail;
                                if v.accepted {
                                    accepted_idx.push(records.len());
                                    texts.push(content.main_text);
                                }
                            }
                        }
                    }
                }
            }
            if !rec.accepted {
                *result
                    .rejection_histogram
                    .entry(rec.outcome.clone())
                    .or_default() += 1;
            }
            records.push(rec);
        }

        result.pages_sampled = records.len();
        result.pages_accepted = texts.len();
        result.pages_rejected = records.len() - texts.len();
        if texts.is_empty() && transport_failures == records.len() {
            result.error = Some(format!(
                "all {transport_failures} fetches failed in transport"
            ));
            return Ok((result, records));
        }
        if texts.len() < cfg.classifier.min_pages {
            result.status = SiteStatus::InsufficientPages;
            return Ok((result, records));
        }

        let batch = self.scorer.score_texts(&texts)?;
        for (i, s) in accepted_idx.iter().zip(&batch.scores) {
            let r = &mut records[*i];
            r.score = Some(s.score);
            r.token_count = Some(s.token_count);
            r.scorer_id = Some(batch.scorer_id.clone());
        }
        result.scores = batch.scores.iter().map(|s| s.score).collect();
        let features = SiteFeatures::from_scores(
            site.site_id.clone(),
            &result.scores,
            batch.scorer_id,
            cfg.classifier.min_pages,
        )?;
        let verdict = self.model.predict(&features);
        result.borderline = verdict.margin.abs() < cfg.report.borderline_band;
        result.verdict = Some(verdict);
        result.status = SiteStatus::Classified;
        Ok((result, records))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub parallelism: usize,
    /// When set, no new site is started; sites in progress finish.
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// Completed results in manifest order, reused ones included.
    pub results: Vec<SiteResult>,
    pub reused: usize,
    /// Sites that hit an infrastructure error and will be retried on resume.
    pub failed: Vec<(String, String)>,
    pub stopped: bool,
}

impl BatchOutcome {
    pub fn has_failures(&self) -> bool {
        !self.failed.is_empty()
            || self
                .results
                .iter()
                .any(|r| r.status == SiteStatus::Unreachable)
    }
}

struct Logs {
    pages: JsonlWriter,
    sites: JsonlWriter,
    results: JsonlWriter,
}

/// Rewrites `path` keeping only records of `keep` sites, ordered by
/// `order`. Torn and foreign lines are dropped.
fn compact(
    path: &Path,
    keep: &HashSet<String>,
    order: &HashMap<String, usize>,
) -> Result<(), StudyError> {
    let mut rows: Vec<Value> = read_jsonl(path).map_err(StudyError::io(path))?;
    rows.retain(|v| v["site_id"].as_str().is_some_and(|id| keep.contains(id)));
    rows.sort_by_key(|v| order[v["site_id"].as_str().expect("retained rows have ids")]);
    let mut out = Vec::new();
    for v in &rows {
        serde_json::to_writer(&mut out, v).expect("values serialize");
        out.push(b'\n');
    }
    write_atomic(path, &out).map_err(StudyError::io(path))
}

fn compact_all(
    files: &RunFiles,
    keep: &HashSet<String>,
    order: &HashMap<String, usize>,
) -> Result<(), StudyError> {
    for path in [files.pages(), files.sites(), files.results()] {
        compact(&path, keep, order)?;
    }
    Ok(())
}

/// Runs every site of `manifest` not already present in the results log
/// of `out_dir`, with at most `parallelism` sites in flight.
///
/// Logs are compacted on entry (dropping records of unfinished sites) and
/// on exit (ordering records by manifest position), so the files of a
/// resumed run match those of an uninterrupted one.
pub fn run_batch(
    pipeline: &Pipeline,
    manifest: &RunManifest,
    out_dir: &Path,
    opts: &BatchOptions,
) -> Result<BatchOutcome, StudyError> {
    if opts.parallelism == 0 {
        return Err(StudyError::Config("parallelism must be at least 1".into()));
    }
    manifest.validate()?;
    std::fs::create_dir_all(out_dir).map_err(StudyError::io(out_dir))?;
    let files = RunFiles::new(out_dir);

    if files.manifest().exists() {
        let prev = files.load_manifest()?;
        if prev.run_id != manifest.run_id {
            return Err(StudyError::Config(format!(
                "{} belongs to run {:?}, not {:?}",
                out_dir.display(),
                prev.run_id,
                manifest.run_id
            )));
        }
    } else {
        let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        write_atomic(&files.manifest(), &json).map_err(StudyError::io(files.manifest()))?;
    }

    let order: HashMap<String, usize> = manifest
        .sites
        .iter()
        .enumerate()
        .map(|(i, s)| (s.site_id.clone(), i))
        .collect();
    let prior: Vec<SiteResult> = files
        .load_results()?
        .into_iter()
        .filter(|r| order.contains_key(&r.site_id))
        .collect();
    let mut done: HashSet<String> = prior.iter().map(|r| r.site_id.clone()).collect();
    compact_all(&files, &done, &order)?;
    let reused = prior.len();

    let pending: Vec<&SiteSpec> = manifest
        .sites
        .iter()
        .filter(|s| !done.contains(&s.site_id))
        .collect();
    let logs = Mutex::new(Logs {
        pages: JsonlWriter::append(&files.pages()).map_err(StudyError::io(files.pages()))?,
        sites: JsonlWriter::append(&files.sites()).map_err(StudyError::io(files.sites()))?,
        results: JsonlWriter::append(&files.results()).map_err(StudyError::io(files.results()))?,
    });
    let next = AtomicUsize::new(0);
    let fresh = Mutex::new(Vec::new());
    let failed = Mutex::new(Vec::new());
    let io_error = Mutex::new(None);
    let stop_requested = || opts.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst));

    std::thread::scope(|scope| {
        for _ in 0..opts.parallelism.min(pending.len()) {
            scope.spawn(|| loop {
                if stop_requested() || io_error.lock().expect("poisoned").is_some() {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(site) = pending.get(i) else { return };
                match pipeline.run_site(site) {
                    Ok((result, pages)) => {
                        let mut logs = logs.lock().expect("log lock poisoned");
                        let written = (|| {
                            for p in &pages {
                                logs.pages.write(p)?;
                            }
                            if let Some(v) = &result.verdict {
                                logs.sites.write(v)?;
                            }
                            // The results line commits the site.
                            logs.results.write(&result)
                        })();
                        match written {
                            Ok(()) => fresh.lock().expect("poisoned").push(result),
                            Err(e) => {
                                *io_error.lock().expect("poisoned") = Some(StudyError::Io {
                                    path: files.dir.clone(),
                                    source: e,
                                })
                            }
                        }
                    }
                    Err(e) => {
                        log::error!("site {} failed: {e}", site.site_id);
                        failed
                            .lock()
                            .expect("poisoned")
                            .push((site.site_id.clone(), e.to_string()));
                    }
                }
            });
        }
    });
    drop(logs);
    if let Some(e) = io_error.into_inner().expect("poisoned") {
        return Err(e);
    }

    let mut results = prior;
    results.extend(fresh.into_inner().expect("poisoned"));
    done.extend(results.iter().map(|r| r.site_id.clone()));
    compact_all(&files, &done, &order)?;
    results.sort_by_key(|r| order[&r.site_id]);
    let mut failed = failed.into_inner().expect("poisoned");
    failed.sort_by_key(|(id, _)| order[id]);
    Ok(BatchOutcome {
        results,
        reused,
        failed,
        stopped: stop_requested(),
    })
}
