//! End-to-end runs over a manifest of sites, and the reports built from
//! their results log.

mod cdf;
mod rank;
mod report;
mod run;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::classifier::{ClassifierError, SiteVerdict, DEFAULT_MIN_PAGES};
use crate::fetcher::{FetchPolicy, DEFAULT_ARCHIVE_BASE};
use crate::filter::FilterThresholds;
use crate::sampler::{CandidateSource, SamplingConfig, SiteLabel, SiteSpec};
use crate::score::{ScoreError, ScorerEndpoint};

pub use cdf::{cdf_export, cdf_rows, write_cdf_csv, CdfGrouping};
pub use rank::{rank_significance_test, RankMethod, RankTest, EXACT_ENUMERATION_LIMIT};
pub use report::{percent_half_even, prevalence_report, CohortRow, PrevalenceReport, ReportMeta};
pub use run::{run_batch, BatchOptions, BatchOutcome, Pipeline, RunFiles};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("config error: {0}")]
    Config(String),
    #[error("duplicate site_id {0:?} in manifest")]
    DuplicateSiteId(String),
    #[error("rank test needs two non-empty groups")]
    EmptyGroup,
    #[error("rank {0} is not finite")]
    InvalidRank(f64),
    #[error(transparent)]
    Scorer(#[from] ScoreError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl StudyError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> StudyError {
        let path = path.into();
        move |source| StudyError::Io { path, source }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    /// Use the offline stub instead of the HTTP service.
    pub stub: bool,
    pub endpoint: ScorerEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub min_pages: usize,
    pub model_path: Option<PathBuf>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            min_pages: DEFAULT_MIN_PAGES,
            model_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Sites with `|margin|` below this are flagged borderline.
    pub borderline_band: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            borderline_band: 0.25,
        }
    }
}

/// Every knob of a run. Missing fields take their defaults, and the
/// snapshot stored with a run always has all of them written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub sampling: SamplingConfig,
    pub fetch: FetchPolicy,
    pub filter: FilterThresholds,
    pub scorer: ScorerConfig,
    pub classifier: ClassifierConfig,
    pub report: ReportConfig,
    pub archive_base: Url,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sampling: SamplingConfig::default(),
            fetch: FetchPolicy::default(),
            filter: FilterThresholds::default(),
            scorer: ScorerConfig::default(),
            classifier: ClassifierConfig::default(),
            report: ReportConfig::default(),
            archive_base: Url::parse(DEFAULT_ARCHIVE_BASE).expect("valid constant"),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, StudyError> {
        toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        self.sampling
            .validate()
            .map_err(|e| StudyError::Config(e.to_string()))?;
        self.filter
            .validate()
            .map_err(|e| StudyError::Config(e.to_string()))?;
        if self.scorer.endpoint.batch_size == 0 {
            return Err(StudyError::Config(
                "scorer.batch_size must be at least 1".into(),
            ));
        }
        if self.classifier.min_pages == 0 {
            return Err(StudyError::Config(
                "classifier.min_pages must be at least 1".into(),
            ));
        }
        if self.report.borderline_band.is_nan() || self.report.borderline_band < 0.0 {
            return Err(StudyError::Config(
                "report.borderline_band must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub sites: Vec<SiteSpec>,
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default = "Utc::now")]
    pub created_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>, sites: Vec<SiteSpec>, config: RunConfig) -> Self {
        RunManifest {
            run_id: run_id.into(),
            sites,
            config,
            created_at: Utc::now(),
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let mut seen = HashSet::new();
        for s in &self.sites {
            if !seen.insert(s.site_id.as_str()) {
                return Err(StudyError::DuplicateSiteId(s.site_id.clone()));
            }
            s.validate()
                .map_err(|e| StudyError::Config(e.to_string()))?;
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteStatus {
    Classified,
    InsufficientPages,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteResult {
    pub site_id: String,
    pub status: SiteStatus,
    /// Present exactly when `status` is `classified`.
    pub verdict: Option<SiteVerdict>,
    pub pages_sampled: usize,
    pub pages_accepted: usize,
    pub pages_rejected: usize,
    /// Rejected page counts by filter reason, or by fetch/extract failure.
    pub rejection_histogram: BTreeMap<String, usize>,
    pub search_rank: Option<u32>,
    /// Ground-truth label from the manifest.
    pub label: SiteLabel,
    pub cohort_tags: Vec<String>,
    pub borderline: bool,
    /// Scores of accepted pages, in acceptance order.
    pub scores: Vec<f64>,
    /// Successful HTML responses whose main text was nearly empty; a hint
    /// that the site renders its content with scripts.
    #[serde(default)]
    pub near_empty_pages: usize,
    pub error: Option<String>,
}

impl SiteResult {
    pub fn is_classified(&self) -> bool {
        self.status == SiteStatus::Classified
    }
}

/// One attempted page, as written to `pages.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub site_id: String,
    pub url: Url,
    pub source: CandidateSource,
    pub capture_timestamp: Option<String>,
    pub final_url: Option<Url>,
    pub http_status: Option<u16>,
    pub from_cache: bool,
    pub accepted: bool,
    /// Filter reason, or `fetch_error`, `not_html`, `extract_error`.
    pub outcome: String,
    pub detail: BTreeMap<String, f64>,
    pub error: Option<String>,
    pub score: Option<f64>,
    pub token_count: Option<u32>,
    pub scorer_id: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_snapshot_is_complete() {
        let c = RunConfig::from_toml("[sampling]\nseed = 7\n[report]\nborderline_band = 0.5\n")
            .unwrap();
        assert_eq!(c.sampling.seed, 7);
        assert_eq!(c.sampling.target_accepted, 15);
        assert_eq!(c.report.borderline_band, 0.5);
        let v = serde_json::to_value(&c).unwrap();
        for key in [
            "sampling",
            "fetch",
            "filter",
            "scorer",
            "classifier",
            "report",
            "archive_base",
            "cache_dir",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["fetch"].get("per_host_min_delay").is_some());
        assert!(v["scorer"]["endpoint"].get("batch_size").is_some());
        let back: RunConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_toml_is_config_error() {
        assert!(matches!(
            RunConfig::from_toml("[sampling\n"),
            Err(StudyError::Config(_))
        ));
        let c = RunConfig::from_toml("[filter]\nmax_link_ratio = 2.0\n").unwrap();
        assert!(matches!(c.validate(), Err(StudyError::Config(_))));
    }

    #[test]
    fn duplicate_site_ids_rejected() {
        let m = RunManifest::new(
            "r",
            vec![
                SiteSpec::new("a", "a.example"),
                SiteSpec::new("a", "b.example"),
            ],
            RunConfig::default(),
        );
        assert!(matches!(m.validate(), Err(StudyError::DuplicateSiteId(id)) if id == "a"));
    }
}
