mod common;

use std::collections::BTreeSet;

use llmsite::extract::extract;
use llmsite::filter::{FilterReason, FilterThresholds, SiteDedupState};

#[test]
fn corpus_hits_every_reason_and_accepted_pages_meet_thresholds() {
    let t = FilterThresholds::default();
    let mut state = SiteDedupState::new();
    let mut seen = BTreeSet::new();
    let corpus = common::filter_corpus();
    assert_eq!(corpus.len(), 25);
    for (name, html, want) in &corpus {
        let c = extract(html.as_bytes()).unwrap();
        let v = state.admit(name, &c, &t);
        assert_eq!(v.reason, *want, "{name}: {:?}", v.detail);
        seen.insert(v.reason);
        if v.accepted {
            let r = c.ratios();
            assert!(c.word_count >= t.min_words, "{name}");
            assert!(
                r.link <= t.max_link_ratio
                    && r.list <= t.max_list_ratio
                    && r.table <= t.max_table_ratio,
                "{name}"
            );
            assert!(v.detail["max_jaccard"] < t.dup_jaccard_max, "{name}");
        }
    }
    assert_eq!(seen, FilterReason::ALL.into_iter().collect());
    assert_eq!(state.len(), 10);
}

#[test]
fn duplicate_check_only_against_accepted_pages() {
    // A rejected page never becomes a duplicate target.
    let t = FilterThresholds::default();
    let corpus = common::filter_corpus();
    let short = corpus.iter().find(|p| p.0 == "short-2").unwrap();
    let mut state = SiteDedupState::new();
    let c = extract(short.1.as_bytes()).unwrap();
    assert_eq!(state.admit("a", &c, &t).reason, FilterReason::ShortText);
    assert_eq!(state.len(), 0);
    let ok = extract(corpus[0].1.as_bytes()).unwrap();
    assert_eq!(state.admit("b", &ok, &t).reason, FilterReason::Ok);
    assert_eq!(state.admit("c", &ok, &t).reason, FilterReason::Duplicate);
}
