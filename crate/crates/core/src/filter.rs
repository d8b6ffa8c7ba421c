//! Strict page acceptance: text length, structural ratios, and intra-site
//! near-duplicate detection over word shingles.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ExtractedContent;
use crate::util::hash64;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("invalid filter thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub min_words: usize,
    pub max_link_ratio: f64,
    pub max_list_ratio: f64,
    pub max_table_ratio: f64,
    /// Words per shingle.
    pub shingle_size: usize,
    /// A page whose best Jaccard match against an accepted page reaches
    /// this value is a duplicate.
    pub dup_jaccard_max: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_words: 200,
            max_link_ratio: 0.35,
            max_list_ratio: 0.40,
            max_table_ratio: 0.30,
            shingle_size: 5,
            dup_jaccard_max: 0.50,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InvalidThresholds(m.to_owned()));
        if self.min_words < 1 {
            return bad("min_words must be >= 1");
        }
        if self.shingle_size < 2 {
            return bad("shingle_size must be >= 2");
        }
        for (name, v) in [
            ("max_link_ratio", self.max_link_ratio),
            ("max_list_ratio", self.max_list_ratio),
            ("max_table_ratio", self.max_table_ratio),
            ("dup_jaccard_max", self.dup_jaccard_max),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must be in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Why a page was kept or dropped. Rules are checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Ok,
    ShortText,
    LinkHeavy,
    ListHeavy,
    TableHeavy,
    Duplicate,
}

impl FilterReason {
    pub const ALL: [FilterReason; 6] = [
        FilterReason::Ok,
        FilterReason::ShortText,
        FilterReason::LinkHeavy,
        FilterReason::ListHeavy,
        FilterReason::TableHeavy,
        FilterReason::Duplicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Ok => "ok",
            FilterReason::ShortText => "short_text",
            FilterReason::LinkHeavy => "link_heavy",
            FilterReason::ListHeavy => "list_heavy",
            FilterReason::TableHeavy => "table_heavy",
            FilterReason::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reason: FilterReason,
    /// Measured value of every rule that was evaluated.
    pub detail: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSignature {
    pub url: String,
    pub shingles: HashSet<u64>,
}

/// Signatures of the pages accepted so far for one site, in acceptance order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteDedupState {
    pub accepted_signatures: Vec<PageSignature>,
}

impl SiteDedupState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, url: impl Into<String>, shingles: HashSet<u64>) {
        self.accepted_signatures.push(PageSignature {
            url: url.into(),
            shingles,
        });
    }

    pub fn len(&self) -> usize {
        self.accepted_signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted_signatures.is_empty()
    }

    /// Evaluates a page and records its signature when it is accepted.
    pub fn admit(
        &mut self,
        url: &str,
        content: &ExtractedContent,
        t: &FilterThresholds,
    ) -> FilterVerdict {
        let (verdict, shingles) = evaluate_inner(content, self, t);
        if let (true, Some(s)) = (verdict.accepted, shingles) {
            self.push(url, s);
        }
        verdict
    }
}

/// Applies the rules in fixed order; the first failing rule is the reason.
/// Does not modify `state`.
pub fn evaluate(
    content: &ExtractedContent,
    state: &SiteDedupState,
    t: &FilterThresholds,
) -> FilterVerdict {
    evaluate_inner(content, state, t).0
}

fn evaluate_inner(
    content: &ExtractedContent,
    state: &SiteDedupState,
    t: &FilterThresholds,
) -> (FilterVerdict, Option<HashSet<u64>>) {
    let mut detail = BTreeMap::new();
    let reject = |reason, detail| {
        (
            FilterVerdict {
                accepted: false,
                reason,
                detail,
            },
            None,
        )
    };

    detail.insert("word_count".to_owned(), content.word_count as f64);
    if content.word_count < t.min_words {
        return reject(FilterReason::ShortText, detail);
    }
    let r = content.ratios();
    for (key, value, max, reason) in [
        (
            "link_ratio",
            r.link,
            t.max_link_ratio,
            FilterReason::LinkHeavy,
        ),
        (
            "list_ratio",
            r.list,
            t.max_list_ratio,
            FilterReason::ListHeavy,
        ),
        (
            "table_ratio",
            r.table,
            t.max_table_ratio,
            FilterReason::TableHeavy,
        ),
    ] {
        detail.insert(key.to_owned(), value);
        if value > max {
            return reject(reason, detail);
        }
    }

    let shingles = shingle_signature(&content.main_text, t.shingle_size);
    let max_jaccard = state
        .accepted_signatures
        .iter()
        .map(|s| jaccard(&shingles, &s.shingles))
        .fold(0.0, f64::max);
    detail.insert("max_jaccard".to_owned(), max_jaccard);
    if !state.is_empty() && max_jaccard >= t.dup_jaccard_max {
        return reject(FilterReason::Duplicate, detail);
    }
    (
        FilterVerdict {
            accepted: true,
            reason: FilterReason::Ok,
            detail,
        },
        Some(shingles),
    )
}

/// Hashes of every window of `k` consecutive lowercased words.
pub fn shingle_signature(text: &str, k: usize) -> HashSet<u64> {
    assert!(k >= 2, "shingle size must be at least 2");
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    if words.len() < k {
        return HashSet::new();
    }
    words
        .windows(k)
        .map(|w| hash64(w.join(" ").as_bytes()))
        .collect()
}

/// `|a ∩ b| / |a ∪ b|`, and 0 when both are empty.
pub fn jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|h| large.contains(h)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
