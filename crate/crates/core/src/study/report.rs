use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SiteResult, SiteStatus};
use crate::classifier::{Label, PERCENTILE_DEFINITION};

pub const SIGNIFICANCE_TEST: &str = "Mann-Whitney U on best search rank per site, two-sided";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub tag: String,
    pub total: usize,
    pub llm_count: usize,
    pub llm_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub percentile_definition: String,
    pub significance_test: String,
    pub borderline_band: f64,
    pub rounding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceReport {
    pub total_classified: usize,
    pub llm_count: usize,
    pub llm_pct: f64,
    pub cohorts: Vec<CohortRow>,
    /// Accepted pages over classified sites.
    pub pages_total: usize,
    pub borderline_count: usize,
    pub insufficient_pages: usize,
    pub unreachable: usize,
    pub meta: ReportMeta,
}

impl PrevalenceReport {
    /// Every percentage recomputes from the counts next to it.
    pub fn is_consistent(&self) -> bool {
        self.llm_pct == percent_half_even(self.llm_count, self.total_classified)
            && self.llm_count <= self.total_classified
            && self.cohorts.iter().all(|c| {
                c.llm_count <= c.total
                    && c.total <= self.total_classified
                    && c.llm_pct == percent_half_even(c.llm_count, c.total)
            })
    }
}

/// `100 * num / den` rounded half-to-even at two decimals, computed in
/// integers so that ties are exact. Zero when `den` is zero.
pub fn percent_half_even(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let scaled = num as u128 * 10_000;
    let den = den as u128;
    let (mut q, r) = (scaled / den, scaled % den);
    if 2 * r > den || (2 * r == den && q % 2 == 1) {
        q += 1;
    }
    q as f64 / 100.0
}

/// Prevalence over classified sites.
///
/// `cohort_prefix` selects cohort rows: `None` for none, `Some("")` for
/// every tag, `Some(p)` for tags starting with `p`. Rows are sorted by tag.
pub fn prevalence_report(
    results: &[SiteResult],
    cohort_prefix: Option<&str>,
    borderline_band: f64,
) -> PrevalenceReport {
    let classified: Vec<&SiteResult> = results.iter().filter(|r| r.is_classified()).collect();
    let is_llm = |r: &SiteResult| r.verdict.as_ref().is_some_and(|v| v.label == Label::Llm);
    let llm_count = classified.iter().filter(|r| is_llm(r)).count();

    let mut cohorts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    if let Some(prefix) = cohort_prefix {
        for r in &classified {
            for tag in r.cohort_tags.iter().filter(|t| t.starts_with(prefix)) {
                let e = cohorts.entry(tag.as_str()).or_default();
                e.0 += 1;
                e.1 += usize::from(is_llm(r));
            }
        }
    }
    let count = |s: SiteStatus| results.iter().filter(|r| r.status == s).count();

    PrevalenceReport {
        total_classified: classified.len(),
        llm_count,
        llm_pct: percent_half_even(llm_count, classified.len()),
        cohorts: cohorts
            .into_iter()
            .map(|(tag, (total, llm))| CohortRow {
                tag: tag.to_owned(),
                total,
                llm_count: llm,
                llm_pct: percent_half_even(llm, total),
            })
            .collect(),
        pages_total: classified.iter().map(|r| r.pages_accepted).sum(),
        borderline_count: classified.iter().filter(|r| r.borderline).count(),
        insufficient_pages: count(SiteStatus::InsufficientPages),
        unreachable: count(SiteStatus::Unreachable),
        meta: ReportMeta {
            percentile_definition: PERCENTILE_DEFINITION.into(),
            significance_test: SIGNIFICANCE_TEST.into(),
            borderline_band,
            rounding: "round half to even, 2 decimals".into(),
        },
    }
}
